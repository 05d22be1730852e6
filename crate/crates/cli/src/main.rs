//! `phaseforge`: validate, merge, resolve and evaluate phase annotations.
//!
//! Exit status is 0 on success, 2 when input parses but fails validation,
//! and 1 on I/O or schema errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "phaseforge", version, about = "Surgical phase annotation consensus and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a track, prediction log, metadata table or case manifest.
    Validate(ValidateArgs),
    /// AND-merge annotator tracks into a consensus draft.
    Consensus(ConsensusArgs),
    /// Fill the blanks of a draft from an inspector ledger.
    Resolve(ResolveArgs),
    /// Per-phase AP, mAP and cross-entropy of a prediction log.
    Eval(EvalArgs),
    /// Consensus-minus-annotation AP deltas from a results table.
    Deltas(DeltasArgs),
    /// Covariate-balanced cross-validation splits.
    Splits(SplitsArgs),
    /// Replay a prediction log through the online sliding window.
    Replay(ReplayArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "input")]
struct ValidateInput {
    #[arg(long)]
    track: Option<PathBuf>,
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    input: ValidateInput,
    /// `cholec`, `gastrectomy`, or a taxonomy JSON file.
    #[arg(long, default_value = "cholec")]
    taxonomy: String,
    /// Expected frame count of a track.
    #[arg(long)]
    frames: Option<usize>,
    /// Reject blank frames in a track.
    #[arg(long)]
    complete: bool,
}

#[derive(Args)]
pub struct ConsensusArgs {
    /// Draft track CSV to write; blanks mark disagreement.
    #[arg(long)]
    out: PathBuf,
    /// Case id recorded in the draft.
    #[arg(long, default_value = "case")]
    case: String,
    /// Annotator track CSVs; the file stem is the annotator id.
    #[arg(required = true, num_args = 2..)]
    tracks: Vec<PathBuf>,
}

#[derive(Args)]
pub struct ResolveArgs {
    #[arg(long)]
    draft: PathBuf,
    /// Resolution ledger JSON.
    #[arg(long)]
    ledger: PathBuf,
    /// Output track CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check assigned labels against this taxonomy.
    #[arg(long)]
    taxonomy: Option<String>,
    /// Exit 0 even if blanks remain.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Reference track CSV.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "cholec")]
    taxonomy: String,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
pub struct DeltasArgs {
    /// `model,split,annotation,ap` CSV with a `Con` row per model and split.
    #[arg(long)]
    results: PathBuf,
    /// Print the full table and per-model means as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
pub struct SplitsArgs {
    /// Case metadata CSV.
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    folds: usize,
    /// Cases per test set.
    #[arg(long)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated covariates; defaults to age, operation time, bleeding and BMI.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// `exhaustive` or `independent`; chosen from the sizes when omitted.
    #[arg(long)]
    strategy: Option<String>,
    /// Write the plan JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 16)]
    window: usize,
    /// `queue` (feature queue) or `wait` (full window wait).
    #[arg(long, default_value = "queue")]
    mode: String,
    /// `suppress` or `hold_unknown`.
    #[arg(long, default_value = "suppress")]
    warmup: String,
    /// Defaults to the builtin taxonomy with the log's class count.
    #[arg(long)]
    taxonomy: Option<String>,
    /// Decision CSV to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Store root directory.
    #[arg(long, env = "PHASEFORGE_HOME", default_value = "phaseforge-home")]
    store: PathBuf,
    /// Accepted bearer token; repeatable. Without any, every request is allowed.
    #[arg(long = "token")]
    tokens: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Consensus(a) => commands::consensus(a),
        Command::Resolve(a) => commands::resolve(a),
        Command::Eval(a) => commands::eval(a),
        Command::Deltas(a) => commands::deltas(a),
        Command::Splits(a) => commands::splits(a),
        Command::Replay(a) => commands::replay(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phaseforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
