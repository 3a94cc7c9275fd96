//! `asymshap`: attribution, evaluation, comparison and interaction runs.

mod commands;
mod config;
mod method;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use asymshap::eval::PerturbMode;
use asymshap::BaselineKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ProviderKind, RunConfig};

const PRECEDENCE: &str = "Settings are resolved as: command-line flags, then the --config TOML file, then \
built-in defaults. ASYMSHAP_ENDPOINT supplies --endpoint when the flag is absent. Data files go to --out; \
progress and summaries go to stderr. Exit status: 0 on success, 1 if any instance or check failed, 2 on \
configuration or usage errors.";

#[derive(Parser)]
#[command(name = "asymshap", version, about = "Shapley attributions with random or conditional baselines", after_help = PRECEDENCE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute every instance and write attributions.jsonl.
    Attribute(Overrides),
    /// Faithfulness metrics (LOR, SF, CM) for attribution files or methods.
    Evaluate(Overrides),
    /// Metrics and ranking agreement for several methods over several seeds.
    Compare(Overrides),
    /// Influence graphs from asymmetric interactions.
    Interact(Overrides),
    /// Check a remote endpoint against the wire protocol.
    Conformance(Overrides),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Pad,
    Delete,
}

impl From<ModeArg> for PerturbMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pad => PerturbMode::Pad,
            ModeArg::Delete => PerturbMode::Delete,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    Random,
    Conditional,
}

#[derive(Debug, Clone, Default, Args)]
#[command(after_help = PRECEDENCE)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin world (twin-bits, sentiment, planted, flat-singletons), `lexicon`, or `remote`.
    #[arg(long)]
    pub model: Option<String>,
    /// Base URL of a remote model; implies `--model remote` unless a model is given.
    #[arg(long, env = "ASYMSHAP_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Instances (JSONL with `tokens`, or CSV with the label last).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Joint distribution CSV (features..., probability).
    #[arg(long)]
    pub joint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Where conditional completions come from.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Uncertainty-based reweighting of replaced features.
    #[arg(long)]
    pub reweight: bool,
    /// Exhaustive enumeration over the joint instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Samples per feature.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seeds for `compare`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Methods for `evaluate` and `compare`, comma separated: random,
    /// conditional, random-reweighted, conditional-reweighted, exact-random,
    /// exact-conditional.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Attribution files for `evaluate`.
    #[arg(long)]
    pub attributions: Vec<PathBuf>,
    /// Percentages of features perturbed, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Threads for model evaluation; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Largest subset size in influence graphs.
    #[arg(long)]
    pub order_cap: Option<usize>,
    /// Label to explain (default: each instance's predicted class).
    #[arg(long)]
    pub target: Option<usize>,
    /// Only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl From<BaselineArg> for BaselineKind {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Random => BaselineKind::Random,
            BaselineArg::Conditional => BaselineKind::Conditional,
        }
    }
}

fn resolve(o: &Overrides) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(o.config.as_deref())?;
    cfg.apply(o);
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let (o, run): (&Overrides, fn(&RunConfig) -> anyhow::Result<bool>) = match &cli.command {
        Command::Attribute(o) => (o, commands::attribute),
        Command::Evaluate(o) => (o, commands::evaluate),
        Command::Compare(o) => (o, commands::compare),
        Command::Interact(o) => (o, commands::interact),
        Command::Conformance(o) => (o, commands::conformance),
    };
    match resolve(o).and_then(|cfg| run(&cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
