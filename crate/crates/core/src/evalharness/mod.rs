//! Ranking and consistency metrics, and repeatable scenario runs.

mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{generate_synthetic_scenario, topic_vocabularies, SyntheticParams, MAX_GRADE};

use crate::agents::{build_provider, ProviderConfig, ProviderError};
use crate::pipeline::{self, read_json, write_json, write_text, Budget, PipelineError, RunConfig, DEFAULT_PANEL_SIZE};
use crate::weights::{NodeWeights, CR_THRESHOLD};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("alternative {0} has no relevance judgment")]
    MissingJudgment(String),
    #[error("invalid judgments: {0}")]
    InvalidJudgments(String),
    #[error("no consistency records")]
    NoRecords,
    #[error("scenario {path}: {message}")]
    Scenario { path: PathBuf, message: String },
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("run {run}: {source}")]
    Pipeline { run: usize, source: PipelineError },
    #[error(transparent)]
    Artifact(#[from] PipelineError),
}

/// Graded relevance of each alternative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u32>", into = "BTreeMap<String, u32>")]
pub struct RelevanceJudgments(BTreeMap<String, u32>);

impl RelevanceJudgments {
    pub fn new(grades: BTreeMap<String, u32>) -> Result<Self, EvalError> {
        if !grades.values().any(|&g| g > 0) {
            return Err(EvalError::InvalidJudgments("at least one grade must be positive".into()));
        }
        Ok(Self(grades))
    }

    pub fn grade(&self, id: &str) -> Option<u32> {
        self.0.get(id).copied()
    }

    pub fn grades(&self) -> &BTreeMap<String, u32> {
        &self.0
    }
}

impl TryFrom<BTreeMap<String, u32>> for RelevanceJudgments {
    type Error = EvalError;

    fn try_from(grades: BTreeMap<String, u32>) -> Result<Self, Self::Error> {
        Self::new(grades)
    }
}

impl From<RelevanceJudgments> for BTreeMap<String, u32> {
    fn from(j: RelevanceJudgments) -> Self {
        j.0
    }
}

fn dcg(grades: impl IntoIterator<Item = u32>, k: usize) -> f64 {
    grades
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with gain 2^rel - 1 and discount log2(i + 1). The ideal ordering
/// is taken over the grades of the ranked alternatives; IDCG = 0 gives 0.
pub fn ndcg_at_k(ranked: &[String], judgments: &RelevanceJudgments, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if ranked.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    let grades: Vec<u32> = ranked
        .iter()
        .map(|id| judgments.grade(id).ok_or_else(|| EvalError::MissingJudgment(id.clone())))
        .collect::<Result<_, _>>()?;
    let mut ideal = grades.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(grades, k) / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Consensus matrix before any rectification.
    PreOpt,
    /// Snapped matrix after rectification.
    PostOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyStats {
    pub cr_mean: f64,
    pub cr_max: f64,
    pub pass_rate: f64,
    pub n_matrices: usize,
}

pub fn consistency_stats<'a>(
    records: impl IntoIterator<Item = &'a NodeWeights>,
    stage: Stage,
) -> Result<ConsistencyStats, EvalError> {
    let crs: Vec<f64> = records
        .into_iter()
        .map(|r| match stage {
            Stage::PreOpt => r.cr_before.cr,
            Stage::PostOpt => r.cr_after.cr,
        })
        .collect();
    if crs.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let n = crs.len();
    Ok(ConsistencyStats {
        cr_mean: crs.iter().sum::<f64>() / n as f64,
        cr_max: crs.iter().copied().fold(0.0, f64::max),
        pass_rate: crs.iter().filter(|&&cr| cr < CR_THRESHOLD).count() as f64 / n as f64,
        n_matrices: n,
    })
}

fn default_tau() -> f64 {
    0.3
}
fn default_panel_size() -> usize {
    DEFAULT_PANEL_SIZE
}
fn one() -> usize {
    1
}

/// A benchmark scenario. Relative paths are resolved against the directory
/// of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub goal: String,
    pub corpus: PathBuf,
    pub alternatives: PathBuf,
    pub judgments: PathBuf,
    #[serde(default)]
    pub budget: Option<Budget>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_panel_size")]
    pub panel_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Independent repetitions of the full pipeline.
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "one")]
    pub samples: usize,
    /// Generator parameters when the scenario is synthetic.
    #[serde(default)]
    pub generator: Option<SyntheticParams>,
}

impl Scenario {
    /// Loads a scenario file and resolves its paths, which must exist.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let err = |message: String| EvalError::Scenario { path: path.to_path_buf(), message };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        s.resolve(base);
        s.check().map_err(err)?;
        Ok(s)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        for p in [&mut self.corpus, &mut self.alternatives, &mut self.judgments] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn check(&self) -> Result<(), String> {
        for p in [&self.corpus, &self.alternatives, &self.judgments] {
            if !p.exists() {
                return Err(format!("{} does not exist", p.display()));
            }
        }
        if self.runs == 0 {
            return Err("runs must be at least 1".into());
        }
        Ok(())
    }

    pub fn run_config(&self, provider: &ProviderConfig, out: &Path) -> RunConfig {
        RunConfig {
            goal: self.goal.clone(),
            corpus: self.corpus.clone(),
            alternatives: self.alternatives.clone(),
            budget: self.budget,
            tau: self.tau,
            panel_size: self.panel_size,
            provider: provider.clone(),
            seed: self.seed,
            out: out.to_path_buf(),
            samples: self.samples,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub pre_opt: ConsistencyStats,
    pub post_opt: ConsistencyStats,
    pub criteria: usize,
    pub leaves: usize,
    pub depth: usize,
    pub max_fanout: usize,
    pub k_max: usize,
    pub d_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub scenario: String,
    pub runs: Vec<RunMetrics>,
    pub mean_ndcg_at_5: f64,
    pub mean_ndcg_at_10: f64,
    /// Over every matrix of every run.
    pub pre_opt: ConsistencyStats,
    pub post_opt: ConsistencyStats,
}

/// One flat CSV row per run.
#[derive(Serialize)]
struct CsvRow {
    run: usize,
    ndcg_at_5: f64,
    ndcg_at_10: f64,
    cr_mean_pre: f64,
    cr_max_pre: f64,
    pass_rate_pre: f64,
    cr_mean_post: f64,
    cr_max_post: f64,
    pass_rate_post: f64,
    n_matrices: usize,
    criteria: usize,
    leaves: usize,
    depth: usize,
    max_fanout: usize,
    k_max: usize,
    d_max: usize,
}

impl MetricsBundle {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(CsvRow {
                run: r.run,
                ndcg_at_5: r.ndcg_at_5,
                ndcg_at_10: r.ndcg_at_10,
                cr_mean_pre: r.pre_opt.cr_mean,
                cr_max_pre: r.pre_opt.cr_max,
                pass_rate_pre: r.pre_opt.pass_rate,
                cr_mean_post: r.post_opt.cr_mean,
                cr_max_post: r.post_opt.cr_max,
                pass_rate_post: r.post_opt.pass_rate,
                n_matrices: r.post_opt.n_matrices,
                criteria: r.criteria,
                leaves: r.leaves,
                depth: r.depth,
                max_fanout: r.max_fanout,
                k_max: r.k_max,
                d_max: r.d_max,
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }
}

/// Runs the full pipeline `scenario.runs` times, each in `out/run_<r>`, and
/// writes `metrics.json` and `metrics.csv` to `out`.
pub fn run_scenario(scenario: &Scenario, provider: &ProviderConfig, out: &Path) -> Result<MetricsBundle, EvalError> {
    let judgments: RelevanceJudgments = read_json(&scenario.judgments)?;
    let provider_impl = build_provider(provider)?;
    let provider_ref = provider_impl.as_ref();

    let outputs: Vec<(RunMetrics, Vec<NodeWeights>)> = (0..scenario.runs)
        .into_par_iter()
        .map(|run| {
            let config = scenario.run_config(provider, &out.join(format!("run_{run}")));
            let output =
                pipeline::run(&config, provider_ref).map_err(|source| EvalError::Pipeline { run, source })?;
            let ranked = output.rank.result.ranked_ids();
            let h = &output.hierarchy;
            let metrics = RunMetrics {
                run,
                ndcg_at_5: ndcg_at_k(&ranked, &judgments, 5)?,
                ndcg_at_10: ndcg_at_k(&ranked, &judgments, 10)?,
                pre_opt: consistency_stats(&output.weights.nodes, Stage::PreOpt)?,
                post_opt: consistency_stats(&output.weights.nodes, Stage::PostOpt)?,
                criteria: h.nodes.len() - 1,
                leaves: h.leaves().len(),
                depth: h.depth(),
                max_fanout: h.max_fanout(),
                k_max: h.k_max,
                d_max: h.d_max,
            };
            Ok((metrics, output.weights.nodes))
        })
        .collect::<Result<_, EvalError>>()?;

    let all_records: Vec<&NodeWeights> = outputs.iter().flat_map(|(_, nodes)| nodes).collect();
    let runs: Vec<RunMetrics> = outputs.iter().map(|(m, _)| m.clone()).collect();
    let n = runs.len() as f64;
    let bundle = MetricsBundle {
        scenario: if scenario.name.is_empty() { scenario.goal.clone() } else { scenario.name.clone() },
        mean_ndcg_at_5: runs.iter().map(|r| r.ndcg_at_5).sum::<f64>() / n,
        mean_ndcg_at_10: runs.iter().map(|r| r.ndcg_at_10).sum::<f64>() / n,
        pre_opt: consistency_stats(all_records.iter().copied(), Stage::PreOpt)?,
        post_opt: consistency_stats(all_records.iter().copied(), Stage::PostOpt)?,
        runs,
    };
    write_json(&out.join(METRICS_JSON), &bundle)?;
    write_text(&out.join(METRICS_CSV), &bundle.to_csv())?;
    Ok(bundle)
}
