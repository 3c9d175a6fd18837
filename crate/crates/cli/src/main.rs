//! `doc2ahp` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 ingestion, 4 embedding,
//! 5 clustering, 6 hierarchy, 7 weighting, 8 inference, 9 evaluation,
//! 10 artifact read/write.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use doc2ahp::agents::{build_provider, Provider, ProviderKind};
use doc2ahp::evalharness::{self, EvalError, Scenario, SyntheticParams};
use doc2ahp::hierarchy::DEFAULT_BUDGET;
use doc2ahp::pipeline::{self, hierarchy_summary, Budget, PipelineError, RunConfig};
use doc2ahp::weights::WeightsArtifact;

#[derive(Debug, Parser)]
#[command(name = "doc2ahp", version, about = "Document-grounded AHP decision pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Agent backend: mock or http.
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// Maximum children per criterion; set with --d-max to skip budget inference.
    #[arg(long, global = true)]
    k_max: Option<usize>,
    /// Maximum hierarchy depth below the goal.
    #[arg(long, global = true)]
    d_max: Option<usize>,
    /// Relevance threshold for keeping a sub-criterion.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Number of expert personas in the weighting panel.
    #[arg(long, global = true)]
    panel_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest, cluster and build the criteria hierarchy.
    Build(Inputs),
    /// Elicit and rectify pairwise weights for the stored hierarchy.
    Weigh(Inputs),
    /// Score alternatives and write the result and report.
    Rank(Inputs),
    /// Build, weigh and rank in one go.
    Run(Inputs),
    /// Run a benchmark scenario and write metrics.
    Eval {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Override the number of repetitions.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Generate a planted-topic synthetic scenario.
    GenScenario {
        #[arg(long, default_value_t = 5)]
        topics: usize,
        #[arg(long, default_value_t = 6)]
        paragraphs: usize,
        #[arg(long, default_value_t = 20)]
        alternatives: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

#[derive(Debug, Args)]
struct Inputs {
    #[arg(long)]
    goal: Option<String>,
    /// Corpus directory or file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Alternatives JSONL file.
    #[arg(long)]
    alternatives: Option<PathBuf>,
}

enum Failure {
    Pipeline(PipelineError),
    Eval(EvalError),
}

impl Failure {
    fn code(&self) -> u8 {
        let code = match self {
            Failure::Pipeline(e) => e.exit_code(),
            Failure::Eval(EvalError::Pipeline { source, .. }) | Failure::Eval(EvalError::Artifact(source)) => {
                source.exit_code()
            }
            Failure::Eval(EvalError::Provider(_)) => 2,
            Failure::Eval(_) => 9,
        };
        code as u8
    }

    fn stage(&self) -> &'static str {
        match self {
            Failure::Pipeline(e) => e.stage(),
            Failure::Eval(EvalError::Pipeline { source, .. }) | Failure::Eval(EvalError::Artifact(source)) => {
                source.stage()
            }
            Failure::Eval(EvalError::Provider(_)) => "config",
            Failure::Eval(_) => "evaluation",
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Pipeline(e) => write!(f, "{e}"),
            Failure::Eval(e) => write!(f, "{e}"),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Eval(e)
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure::Pipeline(PipelineError::Config(message.into()))
}

/// Defaults, then the config file, then flags.
fn resolve_config(global: &GlobalArgs, inputs: Option<&Inputs>) -> Result<RunConfig, Failure> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(out) = &global.out {
        config.out = out.clone();
    }
    if let Some(kind) = global.provider {
        config.provider.kind = kind;
    }
    if global.k_max.is_some() || global.d_max.is_some() {
        let base = config.budget.unwrap_or(Budget { k_max: DEFAULT_BUDGET.0, d_max: DEFAULT_BUDGET.1 });
        config.budget = Some(Budget {
            k_max: global.k_max.unwrap_or(base.k_max),
            d_max: global.d_max.unwrap_or(base.d_max),
        });
    }
    if let Some(tau) = global.tau {
        config.tau = tau;
    }
    if let Some(size) = global.panel_size {
        config.panel_size = size;
        config.personas.clear();
    }
    if let Some(inputs) = inputs {
        if let Some(goal) = &inputs.goal {
            config.goal = goal.clone();
        }
        if let Some(corpus) = &inputs.corpus {
            config.corpus = corpus.clone();
        }
        if let Some(alternatives) = &inputs.alternatives {
            config.alternatives = alternatives.clone();
        }
    }
    Ok(config)
}

fn provider_for(config: &RunConfig) -> Result<Box<dyn Provider>, Failure> {
    build_provider(&config.provider).map_err(|e| config_error(e.to_string()))
}

fn require(field: &str, missing: bool) -> Result<(), Failure> {
    if missing {
        Err(config_error(format!("`{field}` is required (flag or config file)")))
    } else {
        Ok(())
    }
}

fn print_weights(weights: &WeightsArtifact) {
    for n in &weights.nodes {
        let ws: Vec<String> =
            n.criterion_ids.iter().zip(&n.weights).map(|(id, w)| format!("{id}={w:.4}")).collect();
        println!(
            "{}: CR {:.4} -> {:.4}{} [{}]",
            n.node_id,
            n.cr_before.cr,
            n.cr_after.cr,
            if n.optimized { " (optimized)" } else { "" },
            ws.join(", ")
        );
    }
}

fn print_ranking(result: &doc2ahp::inference::DecisionResult) {
    for (i, r) in result.ranked.iter().enumerate() {
        println!("{:>3}. {} {:.4}", i + 1, r.id, r.utility);
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Build(inputs) => {
            let config = resolve_config(&cli.global, Some(inputs))?;
            require("goal", config.goal.trim().is_empty())?;
            require("corpus", config.corpus.as_os_str().is_empty())?;
            let provider = provider_for(&config)?;
            let built = pipeline::build(&config, provider.as_ref())?;
            print!("{}", hierarchy_summary(&built.hierarchy));
        }
        Command::Weigh(inputs) => {
            let config = resolve_config(&cli.global, Some(inputs))?;
            let provider = provider_for(&config)?;
            print_weights(&pipeline::weigh(&config, provider.as_ref())?);
        }
        Command::Rank(inputs) => {
            let config = resolve_config(&cli.global, Some(inputs))?;
            require("alternatives", config.alternatives.as_os_str().is_empty())?;
            let provider = provider_for(&config)?;
            print_ranking(&pipeline::rank(&config, provider.as_ref())?.result);
        }
        Command::Run(inputs) => {
            let config = resolve_config(&cli.global, Some(inputs))?;
            require("goal", config.goal.trim().is_empty())?;
            require("corpus", config.corpus.as_os_str().is_empty())?;
            require("alternatives", config.alternatives.as_os_str().is_empty())?;
            let provider = provider_for(&config)?;
            let output = pipeline::run(&config, provider.as_ref())?;
            print!("{}", hierarchy_summary(&output.hierarchy));
            print_ranking(&output.rank.result);
        }
        Command::Eval { scenario, runs } => {
            let config = resolve_config(&cli.global, None)?;
            let mut s = Scenario::load(scenario)?;
            if let Some(seed) = cli.global.seed {
                s.seed = seed;
            }
            if let Some(tau) = cli.global.tau {
                s.tau = tau;
            }
            if let Some(size) = cli.global.panel_size {
                s.panel_size = size;
            }
            if let Some(b) = config.budget.filter(|_| cli.global.k_max.is_some() || cli.global.d_max.is_some()) {
                s.budget = Some(b);
            }
            if let Some(r) = runs {
                s.runs = *r;
            }
            let metrics = evalharness::run_scenario(&s, &config.provider, &config.out)?;
            for r in &metrics.runs {
                println!(
                    "run {}: ndcg@5 {:.4} ndcg@10 {:.4} cr_pre mean {:.4} max {:.4} cr_post mean {:.4} max {:.4} pass {:.2}",
                    r.run,
                    r.ndcg_at_5,
                    r.ndcg_at_10,
                    r.pre_opt.cr_mean,
                    r.pre_opt.cr_max,
                    r.post_opt.cr_mean,
                    r.post_opt.cr_max,
                    r.post_opt.pass_rate
                );
            }
            println!(
                "mean ndcg@5 {:.4} ndcg@10 {:.4}; post-optimization pass rate {:.2} over {} matrices",
                metrics.mean_ndcg_at_5, metrics.mean_ndcg_at_10, metrics.post_opt.pass_rate, metrics.post_opt.n_matrices
            );
        }
        Command::GenScenario { topics, paragraphs, alternatives, noise } => {
            let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("scenario"));
            let params = SyntheticParams {
                topics: *topics,
                paragraphs_per_topic: *paragraphs,
                alternatives: *alternatives,
                noise: *noise,
                seed: cli.global.seed.unwrap_or(0),
            };
            evalharness::generate_synthetic_scenario(&params, &out)?;
            println!("{}", out.join("scenario.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[stage={} code={}]: {e}", e.stage(), e.code());
            ExitCode::from(e.code())
        }
    }
}
