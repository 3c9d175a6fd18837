//! The single LLM boundary.
//!
//! Every model touchpoint in the pipeline (complexity inference, criterion
//! summarization, relevance verification, matrix elicitation, leader
//! constraints, alternative scoring and report prose) goes through
//! [`Provider::complete`]; paragraph embeddings go through
//! [`Provider::embed_texts`]. Two implementations exist: [`MockProvider`],
//! a pure offline function of its inputs, and [`HttpProvider`], a client for
//! an OpenAI-compatible service. No other module performs network activity.

mod grammar;
mod http;
mod mock;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use grammar::{parse, render};
pub use http::HttpProvider;
pub use mock::{MockConfig, MockProvider};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("{task} reply does not match the expected grammar: {raw_text:?}")]
    Grammar { task: TaskKind, raw_text: String },
    #[error("invalid {task} request: {message}")]
    InvalidRequest { task: TaskKind, message: String },
    #[error("embedding dimension mismatch at text {index}: expected {expected}, got {found}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    InferComplexity,
    Summarize,
    Verify,
    ElicitMatrix,
    LeaderConstraints,
    Score,
    ReportProse,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::InferComplexity,
        TaskKind::Summarize,
        TaskKind::Verify,
        TaskKind::ElicitMatrix,
        TaskKind::LeaderConstraints,
        TaskKind::Score,
        TaskKind::ReportProse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::InferComplexity => "infer_complexity",
            TaskKind::Summarize => "summarize",
            TaskKind::Verify => "verify",
            TaskKind::ElicitMatrix => "elicit_matrix",
            TaskKind::LeaderConstraints => "leader_constraints",
            TaskKind::Score => "score",
            TaskKind::ReportProse => "report_prose",
        }
    }

    /// Keys a request payload of this kind must carry.
    pub fn payload_keys(self) -> &'static [&'static str] {
        match self {
            TaskKind::InferComplexity => &["goal", "corpus_digest"],
            TaskKind::Summarize => &["texts", "parent_label"],
            TaskKind::Verify => &["child_label", "parent_label"],
            TaskKind::ElicitMatrix => &["criteria", "context"],
            TaskKind::LeaderConstraints => &["criteria", "context"],
            TaskKind::Score => &["alternative", "profile", "criterion_label", "criterion_description", "evidence", "scale"],
            TaskKind::ReportProse => &["facts"],
        }
    }

    /// Keys a parsed reply of this kind carries.
    pub fn reply_keys(self) -> &'static [&'static str] {
        match self {
            TaskKind::InferComplexity => &["k_max", "d_max"],
            TaskKind::Summarize => &["label", "description"],
            TaskKind::Verify => &["score"],
            TaskKind::ElicitMatrix => &["entries"],
            TaskKind::LeaderConstraints => &["constraints"],
            TaskKind::Score => &["rationale", "score", "scale"],
            TaskKind::ReportProse => &["text"],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub persona: String,
    pub task: TaskKind,
    pub payload: Value,
    pub seed: u64,
}

impl AgentRequest {
    pub fn new(task: TaskKind, persona: impl Into<String>, payload: Value, seed: u64) -> Self {
        Self { persona: persona.into(), task, payload, seed }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let obj = self.payload.as_object().ok_or_else(|| ProviderError::InvalidRequest {
            task: self.task,
            message: "payload must be a JSON object".into(),
        })?;
        for key in self.task.payload_keys() {
            if !obj.contains_key(*key) {
                return Err(ProviderError::InvalidRequest {
                    task: self.task,
                    message: format!("missing payload key `{key}`"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub raw_text: String,
    /// Present iff `raw_text` matched the task grammar.
    pub parsed: Option<Value>,
}

impl AgentResponse {
    pub fn from_raw(task: TaskKind, raw_text: String) -> Self {
        let parsed = grammar::parse(task, &raw_text);
        Self { raw_text, parsed }
    }

    pub fn require_parsed(&self, task: TaskKind) -> Result<&Value, ProviderError> {
        self.parsed.as_ref().ok_or_else(|| ProviderError::Grammar {
            task,
            raw_text: self.raw_text.clone(),
        })
    }
}

/// An LLM backend. Implementations must be safe for concurrent calls.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &AgentRequest) -> Result<AgentResponse, ProviderError>;

    /// Unit-norm embeddings, one per input text, all of the same length.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Sends `request` and retries once with a bumped seed if the reply does not
/// parse. Returns the parsed document.
pub fn complete_parsed(provider: &dyn Provider, request: &AgentRequest) -> Result<Value, ProviderError> {
    let first = provider.complete(request)?;
    if let Some(parsed) = first.parsed {
        return Ok(parsed);
    }
    log::warn!("{} reply failed to parse, reprompting once", request.task);
    let mut retry = request.clone();
    retry.seed = request.seed.wrapping_add(1);
    if let Some(obj) = retry.payload.as_object_mut() {
        obj.insert("reprompt".into(), Value::Bool(true));
    }
    let second = provider.complete(&retry)?;
    second.parsed.ok_or(ProviderError::Grammar { task: request.task, raw_text: second.raw_text })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Http,
}

impl FromStr for ProviderKind {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "http" => Ok(ProviderKind::Http),
            other => Err(ProviderError::Config(format!("unknown provider kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Zero disables rate limiting.
    pub rate_limit_rps: f64,
    /// Name of the environment variable holding the API credential.
    pub api_key_env: String,
    pub mock: MockConfig,
}

pub const DEFAULT_API_KEY_ENV: &str = "DOC2AHP_API_KEY";

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            temperature: 0.1,
            timeout_s: 60.0,
            max_retries: 2,
            rate_limit_rps: 0.0,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            mock: MockConfig::default(),
        }
    }
}

/// Builds the provider described by `config`. The http kind reads its
/// credential from the configured environment variable.
pub fn build_provider(config: &ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    match config.kind {
        ProviderKind::Mock => Ok(Box::new(MockProvider::new(config.mock.clone()))),
        ProviderKind::Http => {
            let key = std::env::var(&config.api_key_env).map_err(|_| {
                ProviderError::Config(format!(
                    "http provider requires the `{}` environment variable",
                    config.api_key_env
                ))
            })?;
            Ok(Box::new(HttpProvider::new(config.clone(), key)?))
        }
    }
}
