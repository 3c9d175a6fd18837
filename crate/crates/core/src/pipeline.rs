//! Stage orchestration with JSON artifacts between stages.
//!
//! Every stage reads its inputs from the output directory and writes its
//! outputs there, so `run` and the individual stages produce identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Provider, ProviderConfig};
use crate::cluster::{ward_cluster, ClusterError, Dendrogram};
use crate::corpus::{self, CorpusError, EmbeddedCorpus, SegmentOptions, DEFAULT_MIN_CHARS};
use crate::evidence::Evidence;
use crate::hierarchy::{build_hierarchy, infer_complexity, ComplexityBudget, Hierarchy, HierarchyError, DEFAULT_TAU};
use crate::inference::{
    aggregate_utilities, load_alternatives, render_report, score_all, DecisionResult, InferenceError, ScoreMatrix,
};
use crate::text::mix_seed;
use crate::weights::{weigh_hierarchy, Panel, WeightsArtifact, WeightsError};

pub const CORPUS_FILE: &str = "corpus.json";
pub const DENDROGRAM_FILE: &str = "dendrogram.json";
pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const SCORES_FILE: &str = "scores.json";
pub const RESULT_FILE: &str = "result.json";
pub const REPORT_FILE: &str = "report.md";

pub const DEFAULT_PANEL_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub k_max: usize,
    pub d_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub goal: String,
    pub corpus: PathBuf,
    pub alternatives: PathBuf,
    /// Expert budget; when absent the budget is inferred from the corpus.
    pub budget: Option<Budget>,
    pub tau: f64,
    /// Explicit personas; when empty, `panel_size` built-in personas are used.
    pub personas: Vec<String>,
    pub panel_size: usize,
    pub provider: ProviderConfig,
    pub seed: u64,
    pub out: PathBuf,
    /// Scoring samples averaged per (alternative, leaf) cell.
    pub samples: usize,
    pub min_paragraph_chars: usize,
    /// Append a provider-written summary to the report.
    pub report_prose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            goal: String::new(),
            corpus: PathBuf::new(),
            alternatives: PathBuf::new(),
            budget: None,
            tau: DEFAULT_TAU,
            personas: Vec::new(),
            panel_size: DEFAULT_PANEL_SIZE,
            provider: ProviderConfig::default(),
            seed: 0,
            out: PathBuf::from("out"),
            samples: 1,
            min_paragraph_chars: DEFAULT_MIN_CHARS,
            report_prose: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn panel(&self) -> Result<Panel, PipelineError> {
        let panel = if self.personas.is_empty() {
            Panel::of_size(self.panel_size)
        } else {
            Panel::uniform(self.personas.clone())
        };
        panel.map_err(|e| PipelineError::Config(e.to_string()))
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingestion: {0}")]
    Ingestion(#[source] CorpusError),
    #[error("embedding: {0}")]
    Embedding(#[source] CorpusError),
    #[error("clustering: {0}")]
    Clustering(#[from] ClusterError),
    #[error("hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("weighting: {0}")]
    Weighting(#[from] WeightsError),
    #[error("inference: {0}")]
    Inference(#[from] InferenceError),
    #[error("artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl PipelineError {
    /// Stable stage identifier used in diagnostics.
    pub fn stage(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Ingestion(_) => "ingestion",
            Self::Embedding(_) => "embedding",
            Self::Clustering(_) => "clustering",
            Self::Hierarchy(_) => "hierarchy",
            Self::Weighting(_) => "weighting",
            Self::Inference(_) => "inference",
            Self::Artifact { .. } => "artifact",
        }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Ingestion(_) => 3,
            Self::Embedding(_) => 4,
            Self::Clustering(_) => 5,
            Self::Hierarchy(_) => 6,
            Self::Weighting(_) => 7,
            Self::Inference(_) => 8,
            Self::Artifact { .. } => 10,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Artifact { path: dir.to_path_buf(), message: e.to_string() })?;
    }
    fs::write(path, text).map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

/// Reads and schema-validates an artifact.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub corpus: EmbeddedCorpus,
    pub tree: Dendrogram,
    pub hierarchy: Hierarchy,
}

/// Corpus, clustering and hierarchy construction.
pub fn build(config: &RunConfig, provider: &dyn Provider) -> Result<BuildOutput, PipelineError> {
    let docs = corpus::ingest_corpus(&config.corpus).map_err(PipelineError::Ingestion)?;
    let opts = SegmentOptions { min_chars: config.min_paragraph_chars };
    let paragraphs = corpus::segment_corpus(&docs, opts).map_err(PipelineError::Ingestion)?;
    let embedded = corpus::embed(paragraphs, provider).map_err(PipelineError::Embedding)?;
    let tree = ward_cluster(&embedded)?;

    let budget = match config.budget {
        Some(b) => ComplexityBudget::expert(b.k_max, b.d_max)?,
        None => infer_complexity(
            &config.goal,
            &corpus::corpus_digest(&docs),
            provider,
            mix_seed(config.seed, &["complexity"]),
        )?,
    };
    let hierarchy = build_hierarchy(
        &tree,
        &config.goal,
        &embedded,
        budget,
        config.tau,
        provider,
        mix_seed(config.seed, &["hierarchy"]),
    )?;

    write_json(&config.artifact(CORPUS_FILE), &embedded)?;
    write_json(&config.artifact(DENDROGRAM_FILE), &tree)?;
    write_json(&config.artifact(HIERARCHY_FILE), &hierarchy)?;
    Ok(BuildOutput { corpus: embedded, tree, hierarchy })
}

fn load_build(config: &RunConfig) -> Result<BuildOutput, PipelineError> {
    let corpus: EmbeddedCorpus = read_json(&config.artifact(CORPUS_FILE))?;
    let tree: Dendrogram = read_json(&config.artifact(DENDROGRAM_FILE))?;
    let hierarchy: Hierarchy = read_json(&config.artifact(HIERARCHY_FILE))?;
    let path = config.artifact(HIERARCHY_FILE);
    hierarchy
        .validate_against(&tree)
        .map_err(|e| PipelineError::Artifact { path: path.clone(), message: e.to_string() })?;
    if tree.leaves() != corpus.len() {
        return Err(PipelineError::Artifact {
            path: config.artifact(DENDROGRAM_FILE),
            message: format!("{} leaves but {} paragraphs in {CORPUS_FILE}", tree.leaves(), corpus.len()),
        });
    }
    Ok(BuildOutput { corpus, tree, hierarchy })
}

/// Panel elicitation and weighting over the stored hierarchy.
pub fn weigh(config: &RunConfig, provider: &dyn Provider) -> Result<WeightsArtifact, PipelineError> {
    let built = load_build(config)?;
    let panel = config.panel()?;
    let evidence = Evidence::new(&built.corpus, &built.tree).expect("checked by load_build");
    let weights = weigh_hierarchy(&built.hierarchy, &evidence, &panel, provider, mix_seed(config.seed, &["weights"]))?;
    write_json(&config.artifact(WEIGHTS_FILE), &weights)?;
    Ok(weights)
}

#[derive(Debug, Clone)]
pub struct RankOutput {
    pub scores: ScoreMatrix,
    pub result: DecisionResult,
    pub report: String,
}

/// Scoring, utility aggregation and the report.
pub fn rank(config: &RunConfig, provider: &dyn Provider) -> Result<RankOutput, PipelineError> {
    let built = load_build(config)?;
    let weights_path = config.artifact(WEIGHTS_FILE);
    let weights: WeightsArtifact = read_json(&weights_path)?;
    weights
        .validate()
        .map_err(|e| PipelineError::Artifact { path: weights_path.clone(), message: e.to_string() })?;
    let weight_map = weights.weight_map()?;

    let alternatives = load_alternatives(&config.alternatives)?;
    let evidence = Evidence::new(&built.corpus, &built.tree).expect("checked by load_build");
    let scores = score_all(
        &built.hierarchy,
        &alternatives,
        &evidence,
        provider,
        config.samples,
        mix_seed(config.seed, &["scores"]),
    )?;
    let result = aggregate_utilities(&built.hierarchy, &weight_map, &scores)?;
    let citations: BTreeMap<String, Vec<String>> = built
        .hierarchy
        .leaves()
        .into_iter()
        .map(|leaf| (leaf.id.clone(), evidence.doc_ids(leaf.cluster_node)))
        .collect();
    let report = render_report(
        &result,
        &built.hierarchy,
        &weights,
        &scores,
        &citations,
        config.report_prose.then_some(provider),
    );

    write_json(&config.artifact(SCORES_FILE), &scores)?;
    write_json(&config.artifact(RESULT_FILE), &result)?;
    write_text(&config.artifact(REPORT_FILE), &report)?;
    Ok(RankOutput { scores, result, report })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub hierarchy: Hierarchy,
    pub weights: WeightsArtifact,
    pub rank: RankOutput,
}

/// `build`, `weigh` and `rank` in sequence; the first failure aborts.
pub fn run(config: &RunConfig, provider: &dyn Provider) -> Result<RunOutput, PipelineError> {
    let built = build(config, provider)?;
    let weights = weigh(config, provider)?;
    let rank = rank(config, provider)?;
    Ok(RunOutput { hierarchy: built.hierarchy, weights, rank })
}

/// Indented one-line-per-criterion outline.
pub fn hierarchy_summary(hierarchy: &Hierarchy) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} criteria, {} leaves, depth {}, budget k_max={} d_max={} ({:?})",
        hierarchy.nodes.len() - 1,
        hierarchy.leaves().len(),
        hierarchy.depth(),
        hierarchy.k_max,
        hierarchy.d_max,
        hierarchy.budget_source
    );
    for c in hierarchy.preorder() {
        let _ = writeln!(out, "{}{} [{}]", "  ".repeat(c.depth), c.label, c.id);
    }
    out
}
