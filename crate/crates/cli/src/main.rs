//! `perfdiff`: parse, generate, pair, train and evaluate from the shell.
//!
//! Exit codes: 0 ok, 1 usage, 2 data or validation, 3 internal.

mod cmd;
mod log;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::log::Log;

#[derive(Debug, Parser)]
#[command(name = "perfdiff", version, about = "Pairwise runtime comparison of programs from their syntax trees")]
struct Cli {
    /// Random seed (default 0). Overrides the seed in the config file.
    #[arg(long, global = true, env = "PERFDIFF_SEED")]
    seed: Option<u64>,
    /// Worker threads for encoding and evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Progress and metrics as JSON lines on stderr.
    #[arg(long, global = true)]
    log_json: bool,
    /// JSON training configuration; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a program (.c, .mini, or AST .json) and print its AST.
    Parse(ParseArgs),
    /// Generate a synthetic corpus with a cost oracle.
    Gen(GenArgs),
    /// Build labelled pairs from a manifest.
    Pairs(PairsArgs),
    /// Train a model on a pair set.
    Train(TrainArgs),
    /// Accuracy, AUC, ROC and sensitivity of models on pair sets.
    Eval(EvalArgs),
    /// Compare two programs with a trained model.
    Predict(PredictArgs),
    /// Write tree encodings and node embeddings as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    pub file: PathBuf,
    /// Write the AST JSON here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Print node count, depth and kind histogram instead of the tree.
    #[arg(long)]
    pub stats: bool,
    /// Reduce an AST JSON input to its function definitions.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of programs.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// loop-depth or statement-count.
    #[arg(long, default_value = "loop-depth")]
    pub family: String,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 12)]
    pub max_statements: usize,
    /// Output directory for sources, AST files and manifest.csv.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fraction of the ordered-pair universe to sample.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    /// Always include both orders of a sampled pair.
    #[arg(long)]
    pub symmetric: bool,
    /// Also pair submissions from different problems.
    #[arg(long)]
    pub cross_problem_pairs: bool,
    /// Hold out this fraction of submissions for a test set.
    #[arg(long, requires = "test_out")]
    pub test_fraction: Option<f64>,
    #[arg(long, requires = "test_fraction")]
    pub test_out: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Validation pairs. Without it, a share of the training submissions is held out.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2, conflicts_with = "valid")]
    pub valid_fraction: f64,
    /// Where the best model goes.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Save a resumable checkpoint here after every epoch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint; only --epochs may change.
    #[arg(long, conflicts_with = "grid")]
    pub resume: Option<PathBuf>,
    /// Sweep, e.g. "layers=1,2;d=50,100". The best validation run is saved.
    #[arg(long)]
    pub grid: Option<String>,
    /// treelstm or gcn.
    #[arg(long)]
    pub encoder: Option<String>,
    /// uni, bi or alternating.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lambda: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file, or TAG=FILE; repeat for a cross-evaluation matrix.
    #[arg(long, required = true)]
    pub model: Vec<String>,
    /// Pair file, or TAG=FILE; repeatable.
    #[arg(long, required = true)]
    pub pairs: Vec<String>,
    /// Full report JSON (one model, one pair set); stdout if omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Accuracy matrix CSV, rows are models and columns pair sets.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Sensitivity thresholds in ms, comma separated (default: quantiles).
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub first: PathBuf,
    pub second: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_trees: PathBuf,
    #[arg(long)]
    pub out_nodes: PathBuf,
    /// Programs to encode.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

pub struct Global {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub log: Log,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let log = Log::new(cli.log_json);
    if let Some(n) = cli.jobs {
        if n == 0 {
            log.error("--jobs must be at least 1", 1);
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log.error(&format!("cannot start {n} worker threads: {e}"), 3);
            return ExitCode::from(3);
        }
    }
    let global = Global {
        seed: cli.seed,
        config: cli.config,
        log,
    };
    let result = match cli.command {
        Command::Parse(a) => cmd::parse(&global, a),
        Command::Gen(a) => cmd::gen(&global, a),
        Command::Pairs(a) => cmd::pairs(&global, a),
        Command::Train(a) => cmd::train(&global, a),
        Command::Eval(a) => cmd::eval(&global, a),
        Command::Predict(a) => cmd::predict(&global, a),
        Command::ExportEmbeddings(a) => cmd::export_embeddings(&global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = cmd::exit_code(&e);
            global.log.error(&format!("{e:#}"), code);
            ExitCode::from(code)
        }
    }
}
