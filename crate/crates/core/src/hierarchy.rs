//! Top-down construction of the criteria tree from the dendrogram.
//!
//! Starting at the goal (mapped to the dendrogram root), each criterion
//! above the depth limit whose cluster is not a single paragraph is split
//! with [`adaptive_cut`]. Every proposed sub-cluster is named by the
//! summarizer and checked by the relevance verifier; children scoring below
//! `tau` are pruned. A node keeps its children only if at least two survive.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{complete_parsed, AgentRequest, Provider, ProviderError, TaskKind};
use crate::cluster::{adaptive_cut, ClusterError, Dendrogram};
use crate::corpus::EmbeddedCorpus;
use crate::evidence::Evidence;
use crate::text::{mix_seed, truncate_sentences, truncate_words};

pub const K_MAX_RANGE: (usize, usize) = (2, 15);
pub const D_MAX_RANGE: (usize, usize) = (1, 6);
pub const DEFAULT_BUDGET: (usize, usize) = (5, 2);
pub const DEFAULT_TAU: f64 = 0.5;
/// Paragraphs shown to the summarizer per cluster.
pub const SUMMARY_TEXTS: usize = 64;
const MAX_LABEL_WORDS: usize = 8;
const MAX_DESCRIPTION_SENTENCES: usize = 2;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("goal must not be empty")]
    EmptyGoal,
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("budget ({k_max}, {d_max}) outside [2,15] x [1,6]")]
    InvalidBudget { k_max: usize, d_max: usize },
    #[error("summarizer has no texts for cluster {0}")]
    NoTexts(usize),
    #[error("summarizing cluster {cluster_node}: {source}")]
    Summarize { cluster_node: usize, source: ProviderError },
    #[error("dendrogram does not match the corpus ({leaves} leaves, {paragraphs} paragraphs)")]
    Misaligned { leaves: usize, paragraphs: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("invalid hierarchy: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    /// Path id: "0" for the goal, "0.2" for its second child, and so on.
    pub id: String,
    pub label: String,
    pub description: String,
    pub parent: Option<String>,
    #[serde(skip)]
    pub depth: usize,
    pub cluster_node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSource {
    ExpertSpecified,
    LlmRecommended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityBudget {
    pub k_max: usize,
    pub d_max: usize,
    pub source: BudgetSource,
    /// Set when the recommendation could not be parsed and defaults were used.
    pub fallback: bool,
}

impl ComplexityBudget {
    pub fn expert(k_max: usize, d_max: usize) -> Result<Self, HierarchyError> {
        let ok = (K_MAX_RANGE.0..=K_MAX_RANGE.1).contains(&k_max) && (D_MAX_RANGE.0..=D_MAX_RANGE.1).contains(&d_max);
        if !ok {
            return Err(HierarchyError::InvalidBudget { k_max, d_max });
        }
        Ok(Self { k_max, d_max, source: BudgetSource::ExpertSpecified, fallback: false })
    }
}

/// Asks the provider for a branching and depth budget, clamped into range.
/// Unusable replies fall back to the defaults with `fallback` set.
pub fn infer_complexity(
    goal: &str,
    corpus_digest: &str,
    provider: &dyn Provider,
    seed: u64,
) -> Result<ComplexityBudget, HierarchyError> {
    if goal.trim().is_empty() {
        return Err(HierarchyError::EmptyGoal);
    }
    let request = AgentRequest::new(
        TaskKind::InferComplexity,
        "Decision analyst sizing an AHP hierarchy",
        json!({ "goal": goal, "corpus_digest": corpus_digest }),
        seed,
    );
    let fallback = || ComplexityBudget {
        k_max: DEFAULT_BUDGET.0,
        d_max: DEFAULT_BUDGET.1,
        source: BudgetSource::LlmRecommended,
        fallback: true,
    };
    let parsed = match complete_parsed(provider, &request) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("complexity recommendation unavailable ({e}); using defaults {DEFAULT_BUDGET:?}");
            return Ok(fallback());
        }
    };
    let (Some(k), Some(d)) = (parsed["k_max"].as_f64(), parsed["d_max"].as_f64()) else {
        log::warn!("complexity recommendation has non-numeric fields; using defaults");
        return Ok(fallback());
    };
    if !(k.is_finite() && d.is_finite()) {
        return Ok(fallback());
    }
    let clamp = |v: f64, (lo, hi): (usize, usize)| (v.round().max(lo as f64).min(hi as f64)) as usize;
    Ok(ComplexityBudget {
        k_max: clamp(k, K_MAX_RANGE),
        d_max: clamp(d, D_MAX_RANGE),
        source: BudgetSource::LlmRecommended,
        fallback: false,
    })
}

/// Names the criterion covered by `texts`. Labels are capped at 8 words and
/// descriptions at 2 sentences.
pub fn summarize_criterion(
    texts: &[String],
    parent: &Criterion,
    cluster_node: usize,
    provider: &dyn Provider,
    seed: u64,
) -> Result<(String, String), HierarchyError> {
    if texts.is_empty() {
        return Err(HierarchyError::NoTexts(cluster_node));
    }
    let request = AgentRequest::new(
        TaskKind::Summarize,
        "Analyst naming decision criteria from source documents",
        json!({ "texts": texts, "parent_label": parent.label, "parent_description": parent.description }),
        seed,
    );
    let parsed =
        complete_parsed(provider, &request).map_err(|source| HierarchyError::Summarize { cluster_node, source })?;
    let label = truncate_words(parsed["label"].as_str().unwrap_or_default(), MAX_LABEL_WORDS);
    let description = truncate_sentences(parsed["description"].as_str().unwrap_or_default(), MAX_DESCRIPTION_SENTENCES);
    Ok((label, description))
}

/// Relevance of a proposed child to its parent in [0, 1]. Provider failures
/// score 0 so the branch is pruned rather than aborting the build.
pub fn verify_relevance(child_label: &str, parent: &Criterion, provider: &dyn Provider, seed: u64) -> f64 {
    let request = AgentRequest::new(
        TaskKind::Verify,
        "Discriminator checking criterion relevance",
        json!({ "child_label": child_label, "parent_label": parent.label, "parent_description": parent.description }),
        seed,
    );
    match complete_parsed(provider, &request) {
        Ok(parsed) => match parsed["score"].as_f64() {
            Some(s) if s.is_finite() => s.clamp(0.0, 1.0),
            _ => {
                log::warn!("verifier returned no numeric score for {child_label:?}; pruning");
                0.0
            }
        },
        Err(e) => {
            log::warn!("verifier failed for {child_label:?} ({e}); pruning");
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHierarchy")]
pub struct Hierarchy {
    pub goal: String,
    pub k_max: usize,
    pub d_max: usize,
    pub tau: f64,
    pub budget_source: BudgetSource,
    /// Criteria in breadth-first order, root first.
    pub nodes: Vec<Criterion>,
}

#[derive(Deserialize)]
struct RawHierarchy {
    goal: String,
    k_max: usize,
    d_max: usize,
    tau: f64,
    budget_source: BudgetSource,
    nodes: Vec<Criterion>,
}

impl TryFrom<RawHierarchy> for Hierarchy {
    type Error = HierarchyError;

    fn try_from(raw: RawHierarchy) -> Result<Self, Self::Error> {
        let mut h = Hierarchy {
            goal: raw.goal,
            k_max: raw.k_max,
            d_max: raw.d_max,
            tau: raw.tau,
            budget_source: raw.budget_source,
            nodes: raw.nodes,
        };
        h.fill_depths()?;
        h.validate()?;
        Ok(h)
    }
}

impl Hierarchy {
    fn fill_depths(&mut self) -> Result<(), HierarchyError> {
        let mut depth: HashMap<String, usize> = HashMap::new();
        for c in &mut self.nodes {
            c.depth = match &c.parent {
                None => 0,
                Some(p) => depth
                    .get(p)
                    .map(|d| d + 1)
                    .ok_or_else(|| HierarchyError::Invalid(format!("{} appears before its parent {p}", c.id)))?,
            };
            depth.insert(c.id.clone(), c.depth);
        }
        Ok(())
    }

    pub fn root(&self) -> &Criterion {
        &self.nodes[0]
    }

    pub fn get(&self, id: &str) -> Option<&Criterion> {
        self.nodes.iter().find(|c| c.id == id)
    }

    pub fn children(&self, id: &str) -> Vec<&Criterion> {
        self.nodes.iter().filter(|c| c.parent.as_deref() == Some(id)).collect()
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        !self.nodes.iter().any(|c| c.parent.as_deref() == Some(id))
    }

    pub fn internal_nodes(&self) -> Vec<&Criterion> {
        self.nodes.iter().filter(|c| !self.is_leaf(&c.id)).collect()
    }

    pub fn leaves(&self) -> Vec<&Criterion> {
        self.nodes.iter().filter(|c| self.is_leaf(&c.id)).collect()
    }

    /// Depth-first order, children in stored order.
    pub fn preorder(&self) -> Vec<&Criterion> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root()];
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(self.children(&c.id).into_iter().rev());
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|c| c.depth).max().unwrap_or(0)
    }

    pub fn max_fanout(&self) -> usize {
        self.nodes.iter().map(|c| self.children(&c.id).len()).max().unwrap_or(0)
    }

    /// Labels from the root down to `id`.
    pub fn path(&self, id: &str) -> Vec<&Criterion> {
        let mut path = Vec::new();
        let mut cur = self.get(id);
        while let Some(c) = cur {
            path.push(c);
            cur = c.parent.as_deref().and_then(|p| self.get(p));
        }
        path.reverse();
        path
    }

    /// One-line context for agents comparing the children of `id`.
    pub fn context_of(&self, id: &str) -> String {
        let labels: Vec<&str> = self.path(id).iter().map(|c| c.label.as_str()).collect();
        format!("Decision goal: {}. Comparing sub-criteria of: {}.", self.goal, labels.join(" > "))
    }

    /// Checks tree shape, budget bounds, fanout and depth limits.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        let bad = |m: String| Err(HierarchyError::Invalid(m));
        if self.goal.trim().is_empty() {
            return Err(HierarchyError::EmptyGoal);
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(HierarchyError::InvalidTau(self.tau));
        }
        ComplexityBudget::expert(self.k_max, self.d_max)?;
        let Some(root) = self.nodes.first() else { return bad("no criteria".into()) };
        if root.parent.is_some() || root.depth != 0 || root.label != self.goal {
            return bad("first criterion must be the goal root".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (k, c) in self.nodes.iter().enumerate() {
            if !seen.insert(c.id.as_str()) {
                return bad(format!("duplicate criterion id {}", c.id));
            }
            if k > 0 {
                let Some(p) = c.parent.as_deref() else { return bad(format!("second root {}", c.id)) };
                let Some(parent) = self.get(p) else { return bad(format!("{} has unknown parent {p}", c.id)) };
                if c.depth != parent.depth + 1 {
                    return bad(format!("{} has depth {} under depth {}", c.id, c.depth, parent.depth));
                }
            }
            if c.depth > self.d_max {
                return bad(format!("{} exceeds depth limit {}", c.id, self.d_max));
            }
            let fanout = self.children(&c.id).len();
            if fanout == 1 || fanout > self.k_max {
                return bad(format!("{} has {fanout} children, allowed 2..={}", c.id, self.k_max));
            }
        }
        Ok(())
    }

    /// Checks that criteria map to dendrogram nodes and that each child's
    /// cluster lies inside its parent's.
    pub fn validate_against(&self, tree: &Dendrogram) -> Result<(), HierarchyError> {
        for c in &self.nodes {
            tree.node(c.cluster_node)?;
            if let Some(parent) = c.parent.as_deref().and_then(|p| self.get(p)) {
                let outer = tree.members(parent.cluster_node);
                if !tree.members(c.cluster_node).iter().all(|m| outer.binary_search(m).is_ok()) {
                    return Err(HierarchyError::Invalid(format!(
                        "cluster of {} is not inside the cluster of {}",
                        c.id, parent.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds the criteria tree breadth-first from the dendrogram.
pub fn build_hierarchy(
    tree: &Dendrogram,
    goal: &str,
    corpus: &EmbeddedCorpus,
    budget: ComplexityBudget,
    tau: f64,
    provider: &dyn Provider,
    seed: u64,
) -> Result<Hierarchy, HierarchyError> {
    if goal.trim().is_empty() {
        return Err(HierarchyError::EmptyGoal);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(HierarchyError::InvalidTau(tau));
    }
    ComplexityBudget::expert(budget.k_max, budget.d_max)?;
    let evidence = Evidence::new(corpus, tree)
        .ok_or(HierarchyError::Misaligned { leaves: tree.leaves(), paragraphs: corpus.len() })?;

    let root = Criterion {
        id: "0".into(),
        label: goal.to_string(),
        description: format!("Decision goal: {goal}"),
        parent: None,
        depth: 0,
        cluster_node: tree.root(),
    };
    let mut nodes = vec![root];
    let mut queue = VecDeque::from([0usize]);

    while let Some(pos) = queue.pop_front() {
        let current = nodes[pos].clone();
        if current.depth >= budget.d_max || tree.is_leaf(current.cluster_node) {
            continue;
        }
        let cut = adaptive_cut(tree, current.cluster_node, budget.k_max)?;
        let proposals: Vec<(usize, String, String, f64)> = cut
            .cluster_roots
            .par_iter()
            .map(|&u| {
                let texts = evidence.texts(u, SUMMARY_TEXTS);
                let node_key = u.to_string();
                let (label, description) = summarize_criterion(
                    &texts,
                    &current,
                    u,
                    provider,
                    mix_seed(seed, &[&current.id, &node_key, "summarize"]),
                )?;
                let score = verify_relevance(&label, &current, provider, mix_seed(seed, &[&current.id, &node_key, "verify"]));
                Ok((u, label, description, score))
            })
            .collect::<Result<_, HierarchyError>>()?;

        let survivors: Vec<_> = proposals.into_iter().filter(|p| p.3 >= tau).collect();
        if survivors.len() < 2 {
            log::debug!("criterion {} keeps {} verified children; left as a leaf", current.id, survivors.len());
            continue;
        }
        for (ordinal, (u, label, description, _)) in survivors.into_iter().enumerate() {
            queue.push_back(nodes.len());
            nodes.push(Criterion {
                id: format!("{}.{}", current.id, ordinal + 1),
                label,
                description,
                parent: Some(current.id.clone()),
                depth: current.depth + 1,
                cluster_node: u,
            });
        }
    }

    let hierarchy = Hierarchy {
        goal: goal.to_string(),
        k_max: budget.k_max,
        d_max: budget.d_max,
        tau,
        budget_source: budget.source,
        nodes,
    };
    hierarchy.validate()?;
    Ok(hierarchy)
}
