//! Consistency-aware weighting of sibling criteria.
//!
//! For every internal criterion a panel of expert personas elicits pairwise
//! judgments, the judgments are fused by a weighted geometric mean, and the
//! consensus is checked for consistency. Inconsistent or leader-constrained
//! groups are rectified by constrained log least squares; otherwise the
//! consensus eigenvector is used. The audit record keeps every matrix.

mod consistency;
mod llsm;
mod matrix;
pub mod saaty;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use consistency::{
    consistency_ratio, eigenvector_weights, power_iteration, random_index, ConsistencyReport, Eigenpair,
    CR_THRESHOLD, POWER_MAX_ITER, POWER_TOL,
};
pub use llsm::{objective, row_geometric_mean, solve_constrained_llsm, LeaderConstraint, LlsmSolution};
pub use matrix::{PairwiseMatrix, WeightVector, RECIPROCITY_TOL};
pub use saaty::snap_to_saaty;

use crate::agents::{complete_parsed, AgentRequest, Provider, ProviderError, TaskKind};
use crate::evidence::Evidence;
use crate::hierarchy::{Criterion, Hierarchy};
use crate::text::mix_seed;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("invalid pairwise matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),
    #[error("invalid leader constraint: {0}")]
    InvalidConstraint(String),
    #[error("infeasible leader constraints: {0}")]
    InfeasibleConstraints(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("aggregation: {0}")]
    Aggregation(String),
    #[error("invalid panel: {0}")]
    Panel(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("node {node_id}: {source}")]
    Node { node_id: String, source: Box<WeightsError> },
}

impl WeightsError {
    fn at(node_id: &str) -> impl Fn(WeightsError) -> WeightsError + '_ {
        move |e| WeightsError::Node { node_id: node_id.to_string(), source: Box::new(e) }
    }
}

/// One agent's judgment matrix and its confidence weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentJudgment {
    pub agent_id: String,
    pub matrix: PairwiseMatrix,
    pub gamma: f64,
}

/// Expert personas and their confidence weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub personas: Vec<String>,
    pub gammas: Vec<f64>,
}

const DEFAULT_PERSONAS: [&str; 5] = [
    "domain analyst focused on evidence in the documents",
    "practitioner focused on day-to-day consequences",
    "end user focused on personal experience",
    "risk officer focused on failure modes",
    "economist focused on cost and value",
];

impl Panel {
    /// Equal confidence 1/K for each persona.
    pub fn uniform(personas: Vec<String>) -> Result<Self, WeightsError> {
        if personas.is_empty() {
            return Err(WeightsError::Panel("panel needs at least one persona".into()));
        }
        let k = personas.len();
        Ok(Self { personas, gammas: vec![1.0 / k as f64; k] })
    }

    /// `size` built-in expert personas, cycling with a numeric suffix past five.
    pub fn of_size(size: usize) -> Result<Self, WeightsError> {
        let personas = (0..size)
            .map(|k| {
                let base = DEFAULT_PERSONAS[k % DEFAULT_PERSONAS.len()];
                let round = k / DEFAULT_PERSONAS.len();
                if round == 0 {
                    format!("Expert {}: {base}", k + 1)
                } else {
                    format!("Expert {}: {base} (variant {round})", k + 1)
                }
            })
            .collect();
        Self::uniform(personas)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        if self.personas.is_empty() || self.personas.len() != self.gammas.len() {
            return Err(WeightsError::Panel("personas and gammas must be non-empty and parallel".into()));
        }
        check_gammas(&self.gammas)
    }
}

fn check_gammas(gammas: &[f64]) -> Result<(), WeightsError> {
    if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0 && *g <= 1.0)) {
        return Err(WeightsError::Panel(format!("confidence weights must lie in [0,1]: {gammas:?}")));
    }
    let sum: f64 = gammas.iter().sum();
    if (sum - 1.0).abs() > RECIPROCITY_TOL {
        return Err(WeightsError::Panel(format!("confidence weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// A criterion being compared, with the evidence shown to the agents.
#[derive(Debug, Clone)]
pub struct Sibling<'a> {
    pub criterion: &'a Criterion,
    pub evidence: Vec<String>,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elicited {
    pub matrix: PairwiseMatrix,
    pub warnings: Vec<String>,
}

/// Asks one persona for the strict upper triangle and fills the rest by
/// reciprocity. Replies are clamped to [1/9, 9]; entries still missing after
/// one reprompt default to 1.
pub fn elicit_matrix(
    siblings: &[Sibling<'_>],
    context: &str,
    provider: &dyn Provider,
    persona: &str,
    seed: u64,
) -> Result<Elicited, WeightsError> {
    let n = siblings.len();
    if n < 2 {
        return Err(WeightsError::InvalidMatrix(format!("need at least 2 siblings, got {n}")));
    }
    let ids: Vec<String> = siblings.iter().map(|s| s.criterion.id.clone()).collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let criteria: Vec<Value> = siblings
        .iter()
        .map(|s| {
            json!({
                "id": s.criterion.id,
                "label": s.criterion.label,
                "description": s.criterion.description,
                "cluster_size": s.cluster_size,
                "evidence": s.evidence,
            })
        })
        .collect();
    let request =
        AgentRequest::new(TaskKind::ElicitMatrix, persona, json!({ "context": context, "criteria": criteria }), seed);

    let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let pairs = n * (n - 1) / 2;
    for attempt in 0..2u64 {
        let mut req = request.clone();
        if attempt > 0 {
            req.seed = seed.wrapping_add(attempt);
            req.payload["reprompt"] = Value::Bool(true);
        }
        let response = provider.complete(&req)?;
        if let Some(parsed) = &response.parsed {
            for entry in parsed["entries"].as_array().into_iter().flatten() {
                let (Some(a), Some(b), Some(v)) =
                    (entry["i"].as_str(), entry["j"].as_str(), entry["value"].as_f64())
                else {
                    continue;
                };
                let (Some(&a), Some(&b)) = (index.get(a), index.get(b)) else { continue };
                if a == b || !(v.is_finite() && v > 0.0) {
                    continue;
                }
                let (key, value) = if a < b { ((a, b), v) } else { ((b, a), 1.0 / v) };
                upper.entry(key).or_insert(saaty::clamp(value));
            }
        }
        if upper.len() == pairs {
            break;
        }
    }

    let mut warnings = Vec::new();
    let matrix = PairwiseMatrix::from_upper(ids.clone(), |i, j| match upper.get(&(i, j)) {
        Some(v) => *v,
        None => 1.0,
    })?;
    for i in 0..n {
        for j in i + 1..n {
            if !upper.contains_key(&(i, j)) {
                let msg = format!("{persona}: no usable judgment for ({}, {}); defaulting to 1", ids[i], ids[j]);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(Elicited { matrix, warnings })
}

/// Weighted geometric mean of the panel's matrices.
pub fn aggregate_matrices(judgments: &[AgentJudgment]) -> Result<PairwiseMatrix, WeightsError> {
    let first = judgments.first().ok_or_else(|| WeightsError::Aggregation("no judgments".into()))?;
    let ids = first.matrix.criterion_ids();
    if let Some(j) = judgments.iter().find(|j| j.matrix.criterion_ids() != ids) {
        return Err(WeightsError::Aggregation(format!(
            "agent {} compares {:?}, expected {:?}",
            j.agent_id,
            j.matrix.criterion_ids(),
            ids
        )));
    }
    let gammas: Vec<f64> = judgments.iter().map(|j| j.gamma).collect();
    check_gammas(&gammas)?;
    PairwiseMatrix::from_upper(ids.to_vec(), |i, j| {
        judgments.iter().map(|jd| jd.gamma * jd.matrix.get(i, j).ln()).sum::<f64>().exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderOutcome {
    pub constraints: Vec<LeaderConstraint>,
    pub warnings: Vec<String>,
}

/// Asks the leader agent for `w_i >= beta w_j` directives. Never fails:
/// malformed replies and invalid triples are dropped with warnings.
pub fn derive_leader_constraints(
    context: &str,
    siblings: &[&Criterion],
    provider: &dyn Provider,
    seed: u64,
) -> LeaderOutcome {
    let mut warnings = Vec::new();
    let criteria: Vec<Value> =
        siblings.iter().map(|c| json!({"id": c.id, "label": c.label, "description": c.description})).collect();
    let request = AgentRequest::new(
        TaskKind::LeaderConstraints,
        "Leader agent setting strategic priorities",
        json!({ "context": context, "criteria": criteria }),
        seed,
    );
    let parsed = match complete_parsed(provider, &request) {
        Ok(p) => p,
        Err(e) => {
            let msg = format!("leader constraints unavailable: {e}");
            log::warn!("{msg}");
            return LeaderOutcome { constraints: Vec::new(), warnings: vec![msg] };
        }
    };
    let mut constraints = Vec::new();
    for raw in parsed["constraints"].as_array().into_iter().flatten() {
        let i = raw["i"].as_str();
        let j = raw["j"].as_str();
        let beta = raw["beta"].as_f64();
        let known = |id: &str| siblings.iter().any(|c| c.id == id);
        match (i, j, beta) {
            (Some(i), Some(j), Some(beta)) if known(i) && known(j) && i != j && beta.is_finite() && beta >= 1.0 => {
                constraints.push(LeaderConstraint::new(i, j, beta));
            }
            _ => {
                let msg = format!("dropping leader constraint {raw}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    LeaderOutcome { constraints, warnings }
}

/// Audit record for one sibling group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeWeights {
    pub node_id: String,
    pub criterion_ids: Vec<String>,
    pub agents: Vec<String>,
    pub agent_matrices: Vec<Vec<Vec<f64>>>,
    pub gammas: Vec<f64>,
    pub consensus_matrix: Vec<Vec<f64>>,
    pub leader_constraints: Vec<LeaderConstraint>,
    /// Whether constrained LLSM ran (CR >= threshold or constraints present).
    pub optimized: bool,
    pub weights: Vec<f64>,
    pub snapped_matrix: Vec<Vec<f64>>,
    pub cr_before: ConsistencyReport,
    /// Consistency of the matrix induced by the continuous weights.
    pub cr_continuous: ConsistencyReport,
    /// Consistency of the snapped matrix.
    pub cr_after: ConsistencyReport,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl NodeWeights {
    pub fn weight_vector(&self) -> Result<WeightVector, WeightsError> {
        WeightVector::new(self.criterion_ids.clone(), self.weights.clone())
    }

    pub fn consensus(&self) -> Result<PairwiseMatrix, WeightsError> {
        PairwiseMatrix::new(self.criterion_ids.clone(), self.consensus_matrix.clone())
    }

    pub fn snapped(&self) -> Result<PairwiseMatrix, WeightsError> {
        PairwiseMatrix::new(self.criterion_ids.clone(), self.snapped_matrix.clone())
    }

    /// Re-validates every matrix and weight vector in the record.
    pub fn validate(&self) -> Result<(), WeightsError> {
        let at = WeightsError::at(&self.node_id);
        self.weight_vector().map_err(&at)?;
        self.consensus().map_err(&at)?;
        self.snapped().map_err(&at)?;
        if self.agents.len() != self.agent_matrices.len() || self.agents.len() != self.gammas.len() {
            return Err(at(WeightsError::Panel("agents, matrices and gammas differ in length".into())));
        }
        for m in &self.agent_matrices {
            PairwiseMatrix::new(self.criterion_ids.clone(), m.clone()).map_err(&at)?;
        }
        Ok(())
    }
}

/// Aggregates, checks and (when needed) rectifies one sibling group.
pub fn weigh_group(
    node_id: &str,
    judgments: &[AgentJudgment],
    constraints: &[LeaderConstraint],
) -> Result<NodeWeights, WeightsError> {
    let consensus = aggregate_matrices(judgments)?;
    let cr_before = consistency_ratio(&consensus)?;
    let optimized = !cr_before.passes || !constraints.is_empty();
    let weights = if optimized {
        solve_constrained_llsm(&consensus, constraints)?.weights
    } else {
        eigenvector_weights(&consensus)?
    };
    let cr_continuous = consistency_ratio(&PairwiseMatrix::from_weights(&weights))?;
    let snapped = snap_to_saaty(&weights);
    let cr_after = consistency_ratio(&snapped)?;
    let mut warnings = Vec::new();
    if !cr_after.passes {
        let msg = format!("snapped matrix CR {:.4} is not below {CR_THRESHOLD}", cr_after.cr);
        log::warn!("node {node_id}: {msg}");
        warnings.push(msg);
    }
    Ok(NodeWeights {
        node_id: node_id.to_string(),
        criterion_ids: consensus.criterion_ids().to_vec(),
        agents: judgments.iter().map(|j| j.agent_id.clone()).collect(),
        agent_matrices: judgments.iter().map(|j| j.matrix.entries().to_vec()).collect(),
        gammas: judgments.iter().map(|j| j.gamma).collect(),
        consensus_matrix: consensus.entries().to_vec(),
        leader_constraints: constraints.to_vec(),
        optimized,
        weights: weights.weights().to_vec(),
        snapped_matrix: snapped.entries().to_vec(),
        cr_before,
        cr_continuous,
        cr_after,
        warnings,
    })
}

/// Elicits from every panel member, derives leader constraints and weighs one
/// sibling group.
pub fn weigh_node(
    parent: &Criterion,
    siblings: &[Sibling<'_>],
    context: &str,
    panel: &Panel,
    provider: &dyn Provider,
    seed: u64,
) -> Result<NodeWeights, WeightsError> {
    panel.validate()?;
    let at = WeightsError::at(&parent.id);
    let elicited: Vec<Elicited> = panel
        .personas
        .par_iter()
        .map(|persona| elicit_matrix(siblings, context, provider, persona, mix_seed(seed, &[&parent.id, persona])))
        .collect::<Result<_, _>>()
        .map_err(&at)?;
    let mut warnings: Vec<String> = elicited.iter().flat_map(|e| e.warnings.iter().cloned()).collect();
    let judgments: Vec<AgentJudgment> = panel
        .personas
        .iter()
        .zip(&panel.gammas)
        .zip(elicited)
        .map(|((persona, gamma), e)| AgentJudgment { agent_id: persona.clone(), matrix: e.matrix, gamma: *gamma })
        .collect();
    let criteria: Vec<&Criterion> = siblings.iter().map(|s| s.criterion).collect();
    let leader = derive_leader_constraints(context, &criteria, provider, mix_seed(seed, &[&parent.id, "leader"]));
    warnings.extend(leader.warnings);
    let mut record = weigh_group(&parent.id, &judgments, &leader.constraints).map_err(&at)?;
    warnings.append(&mut record.warnings);
    record.warnings = warnings;
    Ok(record)
}

/// Weights for every internal criterion plus the full audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsArtifact {
    pub panel: Panel,
    pub nodes: Vec<NodeWeights>,
}

impl WeightsArtifact {
    pub fn weight_map(&self) -> Result<BTreeMap<String, WeightVector>, WeightsError> {
        self.nodes.iter().map(|n| Ok((n.node_id.clone(), n.weight_vector()?))).collect()
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        self.panel.validate()?;
        self.nodes.iter().try_for_each(NodeWeights::validate)
    }
}

/// Number of evidence paragraphs shown per sibling during elicitation.
pub const EVIDENCE_PER_SIBLING: usize = 3;

/// Runs [`weigh_node`] for every internal criterion of `hierarchy`.
pub fn weigh_hierarchy(
    hierarchy: &Hierarchy,
    evidence: &Evidence<'_>,
    panel: &Panel,
    provider: &dyn Provider,
    seed: u64,
) -> Result<WeightsArtifact, WeightsError> {
    panel.validate()?;
    let internal: Vec<&Criterion> = hierarchy.internal_nodes();
    let nodes = internal
        .par_iter()
        .map(|parent| {
            let children = hierarchy.children(&parent.id);
            let siblings: Vec<Sibling<'_>> = children
                .iter()
                .map(|c| Sibling {
                    criterion: c,
                    evidence: evidence.texts(c.cluster_node, EVIDENCE_PER_SIBLING),
                    cluster_size: evidence.size(c.cluster_node),
                })
                .collect();
            let context = hierarchy.context_of(&parent.id);
            weigh_node(parent, &siblings, &context, panel, provider, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightsArtifact { panel: panel.clone(), nodes })
}
