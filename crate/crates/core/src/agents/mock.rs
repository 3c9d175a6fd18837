//! Deterministic offline provider.
//!
//! Every reply is a pure function of the request (task, persona, payload,
//! seed) and the mock configuration, rendered through the same grammar an
//! HTTP reply would have to satisfy.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{grammar, AgentRequest, AgentResponse, Provider, ProviderError, TaskKind};
use crate::corpus::hashing::{cosine, hash_embed, DEFAULT_DIM};
use crate::text::{content_terms, mix_seed, top_terms};
use crate::weights::saaty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    /// Embedding dimension k.
    pub dim: usize,
    pub embed_seed: u64,
    /// Standard deviation of the log-normal perturbation applied to
    /// cluster-size importance ratios during matrix elicitation.
    pub elicitation_noise: f64,
    /// Raw `{i, j, beta}` triples returned by the leader task.
    pub leader_constraints: Vec<Value>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, embed_seed: 0, elicitation_noise: 0.25, leader_constraints: Vec::new() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    config: MockConfig,
}

impl MockProvider {
    pub fn new(config: MockConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        hash_embed(text, self.config.dim, self.config.embed_seed)
    }

    fn reply(&self, req: &AgentRequest) -> String {
        let p = &req.payload;
        match req.task {
            TaskKind::InferComplexity => grammar::render(req.task, &json!({ "k_max": 5, "d_max": 2 })),
            TaskKind::Summarize => {
                let texts: Vec<&str> = p["texts"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
                let top = top_terms(texts.iter().copied(), 8);
                let (label, description) = if top.is_empty() {
                    ("general".to_string(), "About general content.".to_string())
                } else {
                    let label = top.iter().take(3).cloned().collect::<Vec<_>>().join(" ");
                    (label, format!("About {}.", top.join(", ")))
                };
                grammar::render(req.task, &json!({ "label": label, "description": description }))
            }
            TaskKind::Verify => {
                let child = self.embed_one(p["child_label"].as_str().unwrap_or_default());
                let parent = self.embed_one(p["parent_label"].as_str().unwrap_or_default());
                let score = ((cosine(&child, &parent) + 1.0) / 2.0).clamp(0.0, 1.0);
                grammar::render(req.task, &json!({ "score": score }))
            }
            TaskKind::ElicitMatrix => grammar::render(req.task, &json!({ "entries": self.elicit(req) })),
            TaskKind::LeaderConstraints => {
                grammar::render(req.task, &json!({ "constraints": self.config.leader_constraints }))
            }
            TaskKind::Score => {
                let criterion = format!(
                    "{} {}",
                    p["criterion_label"].as_str().unwrap_or_default(),
                    p["criterion_description"].as_str().unwrap_or_default()
                );
                let wanted: BTreeSet<String> = content_terms(&criterion).into_iter().collect();
                let have: BTreeSet<String> =
                    content_terms(p["profile"].as_str().unwrap_or_default()).into_iter().collect();
                let hits: Vec<&String> = wanted.intersection(&have).collect();
                let score = if wanted.is_empty() {
                    0.0
                } else {
                    (1000.0 * hits.len() as f64 / wanted.len() as f64).round() / 100.0
                };
                let rationale = format!(
                    "Profile of {} matches {} of {} criterion terms{}",
                    p["alternative"].as_str().unwrap_or("alternative"),
                    hits.len(),
                    wanted.len(),
                    if hits.is_empty() {
                        ".".to_string()
                    } else {
                        format!(": {}.", hits.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))
                    }
                );
                grammar::render(req.task, &json!({ "rationale": rationale, "score": score, "scale": 10.0 }))
            }
            TaskKind::ReportProse => {
                let facts = &p["facts"];
                let ranking = facts["ranking"].as_array().cloned().unwrap_or_default();
                let goal = facts["goal"].as_str().unwrap_or("the decision goal");
                match ranking.as_slice() {
                    [] => format!("No alternatives were ranked for \"{goal}\"."),
                    [only] => format!("For \"{goal}\", {} is the only ranked alternative.", only["id"].as_str().unwrap_or("?")),
                    [first, second, ..] => format!(
                        "For \"{goal}\", {} ranks first with utility {:.4}, ahead of {} at {:.4}.",
                        first["id"].as_str().unwrap_or("?"),
                        first["utility"].as_f64().unwrap_or(0.0),
                        second["id"].as_str().unwrap_or("?"),
                        second["utility"].as_f64().unwrap_or(0.0),
                    ),
                }
            }
        }
    }

    /// Upper-triangle Saaty judgments from persona-seeded perturbations of
    /// log cluster-size importance ratios.
    fn elicit(&self, req: &AgentRequest) -> Vec<Value> {
        let criteria = req.payload["criteria"].as_array().cloned().unwrap_or_default();
        let importance: Vec<(String, f64)> = criteria
            .iter()
            .map(|c| {
                let id = c["id"].as_str().unwrap_or_default().to_string();
                let size = c["cluster_size"].as_f64().unwrap_or(1.0).max(1.0);
                (id, (1.0 + size).ln())
            })
            .collect();
        let mut entries = Vec::new();
        for (a, (id_i, imp_i)) in importance.iter().enumerate() {
            for (id_j, imp_j) in &importance[a + 1..] {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(req.seed, &[&req.persona, id_i, id_j]));
                let z: f64 = StandardNormal.sample(&mut rng);
                let ratio = imp_i / imp_j * (self.config.elicitation_noise * z).exp();
                entries.push(json!({ "i": id_i, "j": id_j, "value": saaty::nearest(ratio) }));
            }
        }
        entries
    }
}

impl Provider for MockProvider {
    fn complete(&self, request: &AgentRequest) -> Result<AgentResponse, ProviderError> {
        request.validate()?;
        Ok(AgentResponse::from_raw(request.task, self.reply(request)))
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest {
                task: TaskKind::Summarize,
                message: "embed_texts requires at least one text".into(),
            });
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
