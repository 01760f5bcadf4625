//! `epigate` command-line front end.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epigate_core::Error;

#[derive(Parser)]
#[command(name = "epigate", version, about = "Epistemic gating of post-hoc explanations")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model and write a self-describing model file.
    Train(TrainArgs),
    /// Attribute the test split of a dataset with a trained model.
    Explain(ExplainArgs),
    /// Per-sample epistemic scores on the test split.
    Uncertainty(UncertaintyArgs),
    /// Calibrate a gate at a deferral rate and route the test split.
    Gate(GateArgs),
    /// Run one of the studies end to end.
    Experiment(ExperimentArgs),
    /// Run the brute-force oracle suites.
    OracleCheck(OracleArgs),
}

/// Where the data comes from. Built-in schemas read their files from
/// `$EPIGATE_DATA_DIR` (default `./data`).
#[derive(Args, Clone)]
pub struct DataArgs {
    /// Built-in dataset: wine, bean, rice or ecoli.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Schema TOML for a custom dataset.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Single CSV to read instead of the schema's file list.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Master seed (default 0); overrides any seed in `--config`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Lr,
    Rf,
    Mlp,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// TOML with `[logistic]`, `[forest]`, `[mlp]` and `[split]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file written by `train`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long, default_value = "kernel_shap")]
    pub method: String,
    /// Background rows for Shapley methods.
    #[arg(long, default_value_t = 100)]
    pub background: usize,
    /// Explain at most this many test rows.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ReductionArg {
    PredictedClass,
    MeanOverClasses,
}

#[derive(Args)]
pub struct UncertaintyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long, value_enum, default_value = "predicted-class")]
    pub reduction: ReductionArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Route,
    Defer,
}

#[derive(Args)]
pub struct GateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model_file: PathBuf,
    /// Deferral rate in [0, 1].
    #[arg(long)]
    pub nu: f64,
    #[arg(long, value_enum, default_value = "defer")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "predicted-class")]
    pub reduction: ReductionArg,
    /// Explainer model evaluations per sample, to report the relative cost.
    #[arg(long)]
    pub explain_evals: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum StudyArg {
    Correlation,
    Stratified,
    Table3,
    Table4,
    Gating,
    Removal,
    SignalMass,
}

#[derive(Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub name: StudyArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub method: Option<String>,
    /// Perturbation kinds for the correlation study (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    /// TOML merged over the study's default configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `oracle.json` and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure with its exit code: 2 for usage and configuration errors, 1 for
/// runtime failures.
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) => (2, "config"),
            Error::MissingFile(_) => (1, "missing_file"),
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => (1, "io"),
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::ColumnMismatch { .. } => {
                (1, "invalid_input")
            }
            _ => (1, "runtime"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", error_record(&Failure::usage(e.to_string())));
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", error_record(&f));
            ExitCode::from(f.code)
        }
    }
}

fn error_record(f: &Failure) -> String {
    serde_json::json!({ "error": { "kind": f.kind, "message": f.message, "exit_code": f.code } }).to_string()
}
