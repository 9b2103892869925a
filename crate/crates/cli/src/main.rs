mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;

/// Mechanistic pathway generation, beam prediction and evaluation.
///
/// Exit status: 0 success, 1 domain failure (invalid pack, evaluation
/// mismatch), 2 input/output or usage error.
#[derive(Debug, Parser)]
#[command(name = "mechnet", version)]
struct Cli {
    /// Plain-text `key=value` settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes any output.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a template pack; diagnostics go to stderr.
    ValidatePack(ValidatePackArgs),
    /// Print the canonical form of SMILES from arguments or stdin.
    Canon(CanonArgs),
    /// Generate the elementary-step dataset for a reaction file.
    Gen(GenArgs),
    /// Rank dataset steps and beam-search mechanisms, writing a prediction log.
    Beam(BeamArgs),
    /// Score a prediction log against dataset rows.
    Eval(EvalArgs),
    /// List species the network forms besides the recorded products.
    Impurities(ImpuritiesArgs),
    /// Render one reaction's network as Graphviz DOT.
    Dot(DotArgs),
    /// Serve a reference ranker over the line-JSON ranker protocol.
    #[command(hide = true)]
    ServeRanker(ServeRankerArgs),
}

#[derive(Debug, Args)]
struct ValidatePackArgs {
    /// Pack file (default: the built-in starter pack).
    #[arg(long)]
    pack: Option<PathBuf>,
    /// Pack file, as an alternative to `--pack`.
    path: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CanonArgs {
    /// SMILES to canonicalise; read one per line from stdin when absent.
    smiles: Vec<String>,
    /// Extra valence tolerated before a warning is printed.
    #[arg(long)]
    valence_slack: Option<u8>,
}

#[derive(Debug, Args, Clone)]
struct NetworkArgs {
    /// Template pack (default: the built-in starter pack).
    #[arg(long)]
    pack: Option<PathBuf>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    max_paths: Option<usize>,
    /// Apply every class of the pack instead of the record's class.
    #[arg(long)]
    all_classes: bool,
    /// Extra valence tolerated on input species before a warning is logged.
    #[arg(long)]
    valence_slack: Option<u8>,
}

#[derive(Debug, Args, Clone)]
struct SplitArgs {
    /// Train:val:test ratios.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Reaction records, one JSON object per line.
    #[arg(long)]
    reactions: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct BeamArgs {
    #[arg(long)]
    reactions: PathBuf,
    /// Prediction log (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Beam width.
    #[arg(long)]
    beam: Option<usize>,
    /// Discount factor of the accumulated rank.
    #[arg(long)]
    gamma: Option<f64>,
    /// Objective: rank or prob.
    #[arg(long)]
    mode: Option<String>,
    /// oracle, frequency, uniform or extern:<command>.
    #[arg(long)]
    ranker: Option<String>,
    /// Training rows for the frequency ranker (repeatable).
    #[arg(long)]
    train: Vec<PathBuf>,
    /// Only process reactions assigned to this split (train, val or test).
    #[arg(long)]
    only_split: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Prediction log written by `beam`.
    #[arg(long)]
    predictions: PathBuf,
    /// Dataset rows holding the truth (repeatable).
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Comma-separated k values.
    #[arg(long)]
    topk: Option<String>,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Dataset manifest; adds the coverage breakdown to the report.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImpuritiesArgs {
    #[arg(long)]
    reactions: PathBuf,
    /// Impurity report (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    network: NetworkArgs,
}

#[derive(Debug, Args)]
struct DotArgs {
    #[arg(long)]
    reactions: PathBuf,
    /// Record to render (default: the first).
    #[arg(long)]
    id: Option<String>,
    /// DOT output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    network: NetworkArgs,
}

#[derive(Debug, Args)]
struct ServeRankerArgs {
    #[arg(long)]
    pack: Option<PathBuf>,
    /// frequency or uniform.
    #[arg(long, default_value = "frequency")]
    ranker: String,
    #[arg(long)]
    train: Vec<PathBuf>,
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cfg.pick_opt(cli.workers, "workers")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    match cli.command {
        Command::ValidatePack(a) => commands::validate_pack(&cfg, a),
        Command::Canon(a) => commands::canon(&cfg, a),
        Command::Gen(a) => commands::gen(&cfg, a),
        Command::Beam(a) => commands::beam(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Impurities(a) => commands::impurities(&cfg, a),
        Command::Dot(a) => commands::dot(&cfg, a),
        Command::ServeRanker(a) => commands::serve_ranker(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
