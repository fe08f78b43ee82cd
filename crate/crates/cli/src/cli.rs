use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edgecast_core::model::Arch;

#[derive(Debug, Parser)]
#[command(name = "edgecast", version, about = "Train, quantize, search and export integer-only forecasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic hourly level series as CSV.
    Generate(GenerateArgs),
    /// Train a model (floating point, or QAT on top of a floating-point run).
    Train(TrainArgs),
    /// Multi-objective configuration search.
    Search(SearchArgs),
    /// Compile a checkpoint into a deployment manifest.
    Export(ExportArgs),
    /// Check a manifest's CRC, multipliers and golden vectors.
    Verify(VerifyArgs),
    /// Scatter data and a summary row from a search archive.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Lstm,
    Transformer,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Lstm => Arch::Lstm,
            ArchArg::Transformer => Arch::Transformer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fp32,
    Qat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorKind {
    /// Quantization-aware training per trial.
    Train,
    /// Closed-form error surface; no training.
    Surrogate,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 26_280)]
    pub hours: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "qat")]
    pub mode: Mode,
    #[arg(long)]
    pub bits: Option<u8>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Required by the training evaluator.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "train")]
    pub evaluator: EvaluatorKind,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the checkpoint's training bitwidth, else 8.
    #[arg(long)]
    pub bits: Option<u8>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
