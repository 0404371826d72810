//! `vclt` — build, train and evaluate confusion label trees from the shell.
//!
//! Every failure is reported as one line on stderr,
//! `error: <kind>: <message>`, with a matching exit code:
//! 1 usage, 2 format, 3 invariant, 4 numeric, 5 i/o.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vclt_core::ErrorKind;

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "vclt", version, about = "Confusion-graph label trees with multi-kernel SVM nodes")]
pub struct Cli {
    /// TOML config file; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for synthetic data generation
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Progress and diagnostics on stderr
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate blob train/test sets and a score log with planted confusion
    Synth(SynthArgs),
    /// Accumulate a confusion graph from a score log
    BuildGraph(BuildGraphArgs),
    /// Run hierarchical community detection on a confusion graph
    Detect(DetectArgs),
    /// Assemble the label tree from a community hierarchy
    BuildTree(BuildTreeArgs),
    /// Train node classifiers for every sibling group of a tree
    Train(TrainArgs),
    /// Predict labels for a feature file
    Predict(PredictArgs),
    /// Accuracy report on a labelled feature file
    Evaluate(EvaluateArgs),
    /// Multiply-add comparison of dense heads and label trees
    Flops(FlopsArgs),
    /// Rank candidate trees by the path-product quality proxy
    CompareTrees(CompareTreesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving train.csv, test.csv and scores.csv
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub superclusters: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub intra_spread: Option<f64>,
    #[arg(long)]
    pub inter_spread: Option<f64>,
    /// Uniform score jitter added to every category
    #[arg(long)]
    pub noise: Option<f64>,
    /// Confusion strength planted between every pair in the same super-cluster (0 disables)
    #[arg(long, value_name = "STRENGTH")]
    pub within_supercluster: Option<f64>,
    /// Planted pair `a:b:strength` (repeatable)
    #[arg(long, value_name = "A:B:S")]
    pub confusion: Vec<String>,
    /// Planted group `i,j,k:strength`, confusing every pair in it (repeatable)
    #[arg(long, value_name = "LIST:S")]
    pub group: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Score-log CSV (`sample_id,true_label,score_0,...`)
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    /// Number of top predictions per sample that contribute confusion
    #[arg(long)]
    pub tau: Option<usize>,
    /// Comma-separated category names
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, value_name = "PATH")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildTreeArgs {
    #[arg(long, value_name = "PATH")]
    pub hierarchy: Option<PathBuf>,
    /// Graph whose category names label the leaves
    #[arg(long, value_name = "PATH")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    pub tree: Option<PathBuf>,
    /// Labelled feature CSV
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Model description; support vectors go to the same path with `.sv`
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Kernel bank, e.g. `linear,poly:2:1,rbf:auto`
    #[arg(long, value_delimiter = ',')]
    pub kernels: Option<Vec<String>>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the inter-level penalty; 0 skips refinement
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub mkl_iters: Option<usize>,
    #[arg(long)]
    pub refine_epochs: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Feature CSV, labelled or not
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Prediction CSV; stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Labelled feature CSV
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// JSON report; stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Dense head as `in x out` layers, e.g. `4096x4096,4096x100`
    #[arg(long, value_delimiter = ',')]
    pub fc: Option<Vec<String>>,
    /// Tree whose worst path sets the classifier count
    #[arg(long, value_name = "PATH")]
    pub tree: Option<PathBuf>,
    /// Worst-path classifier count, instead of --tree
    #[arg(long, conflicts_with = "tree")]
    pub classifiers: Option<u64>,
    #[arg(long, default_value_t = 4096)]
    pub feature_dim: u64,
    #[arg(long, default_value = "custom")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct CompareTreesArgs {
    /// Square CSV of pairwise category separations, no header
    #[arg(long, value_name = "PATH")]
    pub distances: Option<PathBuf>,
    /// Candidate tree files (at least two)
    #[arg(long = "tree", value_name = "PATH", required = true, num_args = 1..)]
    pub trees: Vec<PathBuf>,
    /// Common proportionality constant
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Group separation: `single` (closest pair) or `average`
    #[arg(long, default_value = "single")]
    pub linkage: String,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Format(String),
    Invariant(String),
    Io(String),
    Core(vclt_core::Error),
}

impl CliError {
    fn kind(&self) -> (&'static str, u8) {
        match self {
            CliError::Usage(_) => ("usage", 1),
            CliError::Format(_) => ("format", 2),
            CliError::Invariant(_) => ("invariant", 3),
            CliError::Io(_) => ("io", 5),
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => ("usage", 1),
                ErrorKind::Format => ("format", 2),
                ErrorKind::Invariant => ("invariant", 3),
                ErrorKind::Numeric => ("numeric", 4),
                ErrorKind::Io => ("io", 5),
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Format(m) | CliError::Invariant(m) | CliError::Io(m) => {
                m.clone()
            }
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<vclt_core::Error> for CliError {
    fn from(e: vclt_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn fail(err: &CliError) -> ExitCode {
    let (kind, code) = err.kind();
    let msg = err.message().replace(['\n', '\r'], " ");
    eprintln!("error: {kind}: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("bad arguments")
                .trim_start_matches("error: ")
                .to_string();
            return fail(&CliError::Usage(first));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = commands::Context {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        verbose: cli.verbose,
        cfg,
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::BuildGraph(a) => commands::build_graph(&ctx, a),
        Command::Detect(a) => commands::detect(&ctx, a),
        Command::BuildTree(a) => commands::build_tree(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Flops(a) => commands::flops(&ctx, a),
        Command::CompareTrees(a) => commands::compare_trees(&ctx, a),
    }
}
