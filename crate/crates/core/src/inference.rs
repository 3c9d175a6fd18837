//! Scoring alternatives on leaf criteria, utility aggregation and reporting.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{complete_parsed, AgentRequest, Provider, ProviderError, TaskKind};
use crate::evidence::Evidence;
use crate::hierarchy::{Criterion, Hierarchy};
use crate::text::mix_seed;
use crate::weights::{WeightVector, WeightsArtifact, CR_THRESHOLD};

/// Rating scale the scorer is asked to use.
pub const DEFAULT_SCALE: f64 = 10.0;
/// Evidence paragraphs attached to each scoring request.
pub const EVIDENCE_PER_LEAF: usize = 3;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no alternatives")]
    NoAlternatives,
    #[error("{path}:{line}: malformed alternative: {message}")]
    MalformedAlternative { path: PathBuf, line: usize, message: String },
    #[error("duplicate alternative id {0}")]
    DuplicateAlternative(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("samples must be at least 1")]
    NoSamples,
    #[error("scoring {alternative} on {leaf}: {source}")]
    Scoring { alternative: String, leaf: String, source: ProviderError },
    #[error("no weight vector for internal criterion {0}")]
    MissingWeights(String),
    #[error("weights of {node} do not match its children: {message}")]
    WeightMismatch { node: String, message: String },
    #[error("no score for alternative {alternative} on leaf {leaf}")]
    MissingScore { alternative: String, leaf: String },
    #[error("invalid score matrix: {0}")]
    InvalidScores(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alternative {
    pub id: String,
    pub name: String,
    pub profile: String,
}

/// Reads `{id, name, profile}` JSONL records.
pub fn load_alternatives(path: &Path) -> Result<Vec<Alternative>, InferenceError> {
    let content =
        fs::read_to_string(path).map_err(|source| InferenceError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| InferenceError::MalformedAlternative {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let alt: Alternative = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if alt.id.is_empty() || alt.profile.trim().is_empty() {
            return Err(malformed("id and profile must be non-empty".into()));
        }
        if !seen.insert(alt.id.clone()) {
            return Err(InferenceError::DuplicateAlternative(alt.id));
        }
        out.push(alt);
    }
    if out.is_empty() {
        return Err(InferenceError::NoAlternatives);
    }
    Ok(out)
}

/// Maps a parsed rating on `scale` linearly onto [0, 1].
pub fn normalize_rating(score: f64, scale: f64) -> f64 {
    (score / scale).clamp(0.0, 1.0)
}

/// Mean normalized rating of `alt` on `leaf` over `samples` draws, plus the
/// first draw's rationale.
pub fn score_alternative(
    alt: &Alternative,
    leaf: &Criterion,
    evidence: &[String],
    provider: &dyn Provider,
    samples: usize,
    seed: u64,
) -> Result<(f64, String), InferenceError> {
    if samples == 0 {
        return Err(InferenceError::NoSamples);
    }
    let mut total = 0.0;
    let mut rationale = None;
    for s in 0..samples {
        let request = AgentRequest::new(
            TaskKind::Score,
            "Evaluator rating an alternative against one criterion",
            json!({
                "alternative": alt.id,
                "profile": alt.profile,
                "criterion_label": leaf.label,
                "criterion_description": leaf.description,
                "evidence": evidence,
                "scale": DEFAULT_SCALE,
            }),
            mix_seed(seed, &[&alt.id, &leaf.id, &s.to_string()]),
        );
        let parsed = complete_parsed(provider, &request).map_err(|source| InferenceError::Scoring {
            alternative: alt.id.clone(),
            leaf: leaf.id.clone(),
            source,
        })?;
        let score = parsed["score"].as_f64().unwrap_or(0.0);
        let scale = parsed["scale"].as_f64().unwrap_or(DEFAULT_SCALE);
        total += normalize_rating(score, scale);
        rationale.get_or_insert_with(|| parsed["rationale"].as_str().unwrap_or_default().to_string());
    }
    Ok((total / samples as f64, rationale.unwrap_or_default()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScores")]
pub struct ScoreMatrix {
    pub alternative_ids: Vec<String>,
    pub leaf_ids: Vec<String>,
    /// `scores[k][j]` is alternative k on leaf j, in [0, 1].
    pub scores: Vec<Vec<f64>>,
    pub rationales: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct RawScores {
    alternative_ids: Vec<String>,
    leaf_ids: Vec<String>,
    scores: Vec<Vec<f64>>,
    rationales: Vec<Vec<String>>,
}

impl TryFrom<RawScores> for ScoreMatrix {
    type Error = InferenceError;

    fn try_from(raw: RawScores) -> Result<Self, Self::Error> {
        let m = ScoreMatrix {
            alternative_ids: raw.alternative_ids,
            leaf_ids: raw.leaf_ids,
            scores: raw.scores,
            rationales: raw.rationales,
        };
        m.validate()?;
        Ok(m)
    }
}

impl ScoreMatrix {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let (m, l) = (self.alternative_ids.len(), self.leaf_ids.len());
        let shape_ok = self.scores.len() == m
            && self.rationales.len() == m
            && self.scores.iter().all(|r| r.len() == l)
            && self.rationales.iter().all(|r| r.len() == l);
        if !shape_ok {
            return Err(InferenceError::InvalidScores(format!("expected a full {m}x{l} matrix")));
        }
        if let Some(s) = self.scores.iter().flatten().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(InferenceError::InvalidScores(format!("score {s} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn get(&self, alternative: &str, leaf: &str) -> Option<f64> {
        let k = self.alternative_ids.iter().position(|a| a == alternative)?;
        let j = self.leaf_ids.iter().position(|l| l == leaf)?;
        Some(self.scores[k][j])
    }

    pub fn rationale(&self, alternative: &str, leaf: &str) -> Option<&str> {
        let k = self.alternative_ids.iter().position(|a| a == alternative)?;
        let j = self.leaf_ids.iter().position(|l| l == leaf)?;
        Some(&self.rationales[k][j])
    }
}

/// Scores every (alternative, leaf) pair; cells run concurrently.
pub fn score_all(
    hierarchy: &Hierarchy,
    alternatives: &[Alternative],
    evidence: &Evidence<'_>,
    provider: &dyn Provider,
    samples: usize,
    seed: u64,
) -> Result<ScoreMatrix, InferenceError> {
    if alternatives.is_empty() {
        return Err(InferenceError::NoAlternatives);
    }
    let leaves = hierarchy.leaves();
    let leaf_evidence: Vec<Vec<String>> =
        leaves.iter().map(|l| evidence.texts(l.cluster_node, EVIDENCE_PER_LEAF)).collect();
    let cells: Vec<(usize, usize)> =
        (0..alternatives.len()).flat_map(|k| (0..leaves.len()).map(move |j| (k, j))).collect();
    let results: Vec<(f64, String)> = cells
        .par_iter()
        .map(|&(k, j)| score_alternative(&alternatives[k], leaves[j], &leaf_evidence[j], provider, samples, seed))
        .collect::<Result<_, _>>()?;

    let l = leaves.len();
    let mut scores = vec![vec![0.0; l]; alternatives.len()];
    let mut rationales = vec![vec![String::new(); l]; alternatives.len()];
    for (&(k, j), (s, r)) in cells.iter().zip(results) {
        scores[k][j] = s;
        rationales[k][j] = r;
    }
    Ok(ScoreMatrix {
        alternative_ids: alternatives.iter().map(|a| a.id.clone()).collect(),
        leaf_ids: leaves.iter().map(|c| c.id.clone()).collect(),
        scores,
        rationales,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAlternative {
    pub id: String,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafContribution {
    pub leaf_id: String,
    /// Product of local weights along the path from the goal.
    pub global_weight: f64,
    pub score: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResult {
    /// Descending utility; ties broken by id.
    pub ranked: Vec<RankedAlternative>,
    pub contributions: BTreeMap<String, Vec<LeafContribution>>,
}

impl DecisionResult {
    pub fn utility(&self, id: &str) -> Option<f64> {
        self.ranked.iter().find(|r| r.id == id).map(|r| r.utility)
    }

    pub fn ranked_ids(&self) -> Vec<String> {
        self.ranked.iter().map(|r| r.id.clone()).collect()
    }
}

/// Local weight of every non-root criterion, checked against the children
/// of each internal node.
fn local_weights(
    hierarchy: &Hierarchy,
    weights: &BTreeMap<String, WeightVector>,
) -> Result<BTreeMap<String, f64>, InferenceError> {
    let mut local = BTreeMap::new();
    for node in hierarchy.internal_nodes() {
        let wv = weights.get(&node.id).ok_or_else(|| InferenceError::MissingWeights(node.id.clone()))?;
        let children = hierarchy.children(&node.id);
        if children.len() != wv.len() {
            return Err(InferenceError::WeightMismatch {
                node: node.id.clone(),
                message: format!("{} children, {} weights", children.len(), wv.len()),
            });
        }
        for child in children {
            let w = wv.get(&child.id).ok_or_else(|| InferenceError::WeightMismatch {
                node: node.id.clone(),
                message: format!("no weight for child {}", child.id),
            })?;
            local.insert(child.id.clone(), w);
        }
    }
    Ok(local)
}

/// Global weight of each leaf, in `hierarchy.leaves()` order.
pub fn leaf_global_weights(
    hierarchy: &Hierarchy,
    weights: &BTreeMap<String, WeightVector>,
) -> Result<Vec<(String, f64)>, InferenceError> {
    let local = local_weights(hierarchy, weights)?;
    Ok(hierarchy
        .leaves()
        .into_iter()
        .map(|leaf| {
            let g = hierarchy.path(&leaf.id).iter().skip(1).map(|c| local[&c.id]).product();
            (leaf.id.clone(), g)
        })
        .collect())
}

/// Bottom-up weighted sums from leaf scores to the goal.
pub fn aggregate_utilities(
    hierarchy: &Hierarchy,
    weights: &BTreeMap<String, WeightVector>,
    scores: &ScoreMatrix,
) -> Result<DecisionResult, InferenceError> {
    let local = local_weights(hierarchy, weights)?;
    let globals = leaf_global_weights(hierarchy, weights)?;

    let mut ranked = Vec::with_capacity(scores.alternative_ids.len());
    let mut contributions = BTreeMap::new();
    for alt in &scores.alternative_ids {
        let score_of = |leaf: &str| {
            scores.get(alt, leaf).ok_or_else(|| InferenceError::MissingScore {
                alternative: alt.clone(),
                leaf: leaf.to_string(),
            })
        };
        let utility = node_utility(hierarchy, &local, hierarchy.root(), &score_of)?;
        let breakdown = globals
            .iter()
            .map(|(leaf, g)| {
                let s = score_of(leaf)?;
                Ok(LeafContribution { leaf_id: leaf.clone(), global_weight: *g, score: s, contribution: g * s })
            })
            .collect::<Result<Vec<_>, InferenceError>>()?;
        contributions.insert(alt.clone(), breakdown);
        ranked.push(RankedAlternative { id: alt.clone(), utility });
    }
    ranked.sort_by(|a, b| b.utility.total_cmp(&a.utility).then_with(|| a.id.cmp(&b.id)));
    Ok(DecisionResult { ranked, contributions })
}

fn node_utility(
    hierarchy: &Hierarchy,
    local: &BTreeMap<String, f64>,
    node: &Criterion,
    score_of: &dyn Fn(&str) -> Result<f64, InferenceError>,
) -> Result<f64, InferenceError> {
    let children = hierarchy.children(&node.id);
    if children.is_empty() {
        return score_of(&node.id);
    }
    children.into_iter().try_fold(0.0, |acc, child| {
        Ok(acc + local[&child.id] * node_utility(hierarchy, local, child, score_of)?)
    })
}

/// Markdown decision report. Deterministic sections are always emitted; a
/// prose summary is appended when a provider is given.
pub fn render_report(
    result: &DecisionResult,
    hierarchy: &Hierarchy,
    audit: &WeightsArtifact,
    scores: &ScoreMatrix,
    citations: &BTreeMap<String, Vec<String>>,
    provider: Option<&dyn Provider>,
) -> String {
    let mut out = String::new();
    let local: BTreeMap<&str, f64> = audit
        .nodes
        .iter()
        .flat_map(|n| n.criterion_ids.iter().map(String::as_str).zip(n.weights.iter().copied()))
        .collect();
    let globals: BTreeMap<String, f64> = weights_by_leaf(result);

    let _ = writeln!(out, "# Decision report\n");
    let _ = writeln!(out, "**Goal:** {}\n", hierarchy.goal);

    let _ = writeln!(out, "## Criteria hierarchy\n");
    for c in hierarchy.preorder() {
        let indent = "  ".repeat(c.depth);
        match local.get(c.id.as_str()) {
            Some(w) => {
                let global = globals.get(&c.id).map(|g| format!(", global {g:.4}")).unwrap_or_default();
                let _ = writeln!(out, "{indent}- **{}** (`{}`): weight {w:.4}{global}", c.label, c.id);
            }
            None => {
                let _ = writeln!(out, "{indent}- **{}** (`{}`)", c.label, c.id);
            }
        }
    }

    let _ = writeln!(out, "\n## Consistency\n");
    let _ = writeln!(out, "| Node | n | CR before | Optimized | CR after (snapped) | Pass |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for n in &audit.nodes {
        let _ = writeln!(
            out,
            "| `{}` | {} | {:.4} | {} | {:.4} | {} |",
            n.node_id,
            n.criterion_ids.len(),
            n.cr_before.cr,
            if n.optimized { "yes" } else { "no" },
            n.cr_after.cr,
            if n.cr_after.cr < CR_THRESHOLD { "yes" } else { "no" }
        );
    }
    let passed = audit.nodes.iter().filter(|n| n.cr_after.cr < CR_THRESHOLD).count();
    let _ = writeln!(out, "\n{passed} of {} comparison matrices satisfy CR < {CR_THRESHOLD}.", audit.nodes.len());

    let _ = writeln!(out, "\n## Ranking\n");
    let _ = writeln!(out, "| Rank | Alternative | Utility |");
    let _ = writeln!(out, "|---|---|---|");
    for (rank, r) in result.ranked.iter().enumerate() {
        let _ = writeln!(out, "| {} | {} | {:.4} |", rank + 1, r.id, r.utility);
    }

    let _ = writeln!(out, "\n## Top contributions\n");
    for r in result.ranked.iter().take(3) {
        let _ = writeln!(out, "### {} (utility {:.4})\n", r.id, r.utility);
        let _ = writeln!(out, "| Leaf criterion | Global weight | Score | Contribution |");
        let _ = writeln!(out, "|---|---|---|---|");
        let mut parts = result.contributions.get(&r.id).cloned().unwrap_or_default();
        parts.sort_by(|a, b| b.contribution.total_cmp(&a.contribution).then_with(|| a.leaf_id.cmp(&b.leaf_id)));
        for p in &parts {
            let label = hierarchy.get(&p.leaf_id).map_or(p.leaf_id.as_str(), |c| c.label.as_str());
            let _ = writeln!(
                out,
                "| {label} (`{}`) | {:.4} | {:.4} | {:.4} |",
                p.leaf_id, p.global_weight, p.score, p.contribution
            );
        }
        if let Some(top) = parts.first() {
            if let Some(why) = scores.rationale(&r.id, &top.leaf_id).filter(|s| !s.is_empty()) {
                let _ = writeln!(out, "\n> {}", why.replace('\n', " "));
            }
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "## Evidence\n");
    for leaf in hierarchy.leaves() {
        let docs = citations.get(&leaf.id).map(|d| d.join(", ")).unwrap_or_default();
        let _ = writeln!(out, "- `{}` {}: {}", leaf.id, leaf.label, if docs.is_empty() { "none" } else { &docs });
    }

    if let Some(provider) = provider {
        let _ = writeln!(out, "\n## Summary\n");
        let facts = json!({
            "goal": hierarchy.goal,
            "ranking": result.ranked.iter().take(5).map(|r| json!({"id": r.id, "utility": r.utility})).collect::<Vec<Value>>(),
            "criteria": hierarchy.leaves().iter().map(|c| json!({"id": c.id, "label": c.label, "global_weight": globals.get(&c.id)})).collect::<Vec<Value>>(),
        });
        let request = AgentRequest::new(TaskKind::ReportProse, "Report writer", json!({ "facts": facts }), 0);
        match complete_parsed(provider, &request) {
            Ok(parsed) => {
                let _ = writeln!(out, "{}", parsed["text"].as_str().unwrap_or_default());
            }
            Err(e) => {
                let _ = writeln!(out, "_Prose summary unavailable: {e}_");
            }
        }
    }
    out
}

fn weights_by_leaf(result: &DecisionResult) -> BTreeMap<String, f64> {
    result
        .contributions
        .values()
        .next()
        .map(|parts| parts.iter().map(|p| (p.leaf_id.clone(), p.global_weight)).collect())
        .unwrap_or_default()
}
