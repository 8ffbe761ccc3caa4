//! `ganq` command line: quantize layers into GQL1 containers, evaluate them
//! against calibration or held-out activations, compare methods, sweep the
//! preconditioning knob, and inspect storage accounting.
//!
//! Exit codes: 0 success, 1 i/o error, 2 configuration error, 3 file format
//! error, 4 numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod methods;

use commands::CalibSource;

#[derive(Parser)]
#[command(name = "ganq", version, about = "Layer-wise LUT-based non-uniform quantization")]
pub struct Cli {
    /// Cap the worker thread pool (default: one per core)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Quantize a weight matrix into a GQL1 layer container
    Quantize(QuantizeArgs),
    /// Evaluate a quantized layer against activations
    Eval(EvalArgs),
    /// Run several methods on the same instance and emit a CSV table
    Compare(CompareArgs),
    /// Sweep fixed-lambda preconditioning against the adaptive default
    SweepLambda(SweepLambdaArgs),
    /// Storage accounting for a layer file or a hypothetical shape
    PackInfo(PackInfoArgs),
    /// Generate a synthetic GQT matrix file
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Rtn,
    Kmeans,
    Ganq,
    #[value(name = "ganq_star", alias = "ganq-star")]
    GanqStar,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rtn => "rtn",
            Method::Kmeans => "kmeans",
            Method::Ganq => "ganq",
            Method::GanqStar => "ganq_star",
            Method::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    UniformGrid,
    Kmeans,
}

#[derive(Args, Clone)]
pub struct CalibArgs {
    /// Calibration activations as a GQT file (rows must equal weight columns)
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Synthetic calibration distribution (used when --calib is absent)
    #[arg(long, default_value = "gauss", value_parser = ["gauss", "heavy_tail_t3"])]
    pub calib_dist: String,
    /// Synthetic calibration column count p (default 8·n)
    #[arg(long)]
    pub calib_cols: Option<usize>,
    /// Seed for the synthetic calibration draw
    #[arg(long, default_value_t = 0)]
    pub calib_seed: u64,
}

impl CalibArgs {
    pub fn source(&self) -> CalibSource {
        match &self.calib {
            Some(path) => CalibSource::File(path.clone()),
            None => CalibSource::Synthetic {
                dist: self.calib_dist.clone(),
                cols: self.calib_cols,
                seed: self.calib_seed,
            },
        }
    }
}

#[derive(Args, Clone)]
pub struct SolveArgs {
    /// Bits per weight (1..=8)
    #[arg(long, default_value_t = 4)]
    pub bits: u8,
    /// Alternating iterations K
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Codebook initialization
    #[arg(long, value_enum, default_value_t = InitArg::UniformGrid)]
    pub init: InitArg,
    /// Positive-definiteness policy: adaptive, off, or `lambda=<v>`
    #[arg(long, default_value = "adaptive")]
    pub precondition: String,
    /// Seed echoed into reports and used for synthetic draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outlier extraction ratio for ganq_star
    #[arg(long, default_value_t = 0.005)]
    pub outlier_ratio: f64,
}

#[derive(Args)]
pub struct QuantizeArgs {
    /// Weight matrix (GQT)
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Ganq)]
    pub method: Method,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// Output layer container (GQL1)
    #[arg(long)]
    pub out: PathBuf,
    /// Write the JSON run report here (otherwise printed to stdout)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Quantized layer container (GQL1)
    #[arg(long)]
    pub layer: PathBuf,
    /// Original weights (GQT), required for the reference term W·X
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Comma-separated methods to run
    #[arg(long, value_delimiter = ',', default_values_t = vec![Method::Rtn, Method::Kmeans, Method::Ganq])]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// Write the CSV table here (otherwise printed to stdout)
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepLambdaArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Fixed-lambda values to sweep; the adaptive policy is always appended
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 10.0, 40.0, 100.0])]
    pub lambdas: Vec<f64>,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[command(flatten)]
    pub calib: CalibArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct PackInfoArgs {
    /// Inspect an existing layer container
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    pub layer: Option<PathBuf>,
    #[arg(long, requires = "cols")]
    pub rows: Option<usize>,
    #[arg(long, requires = "rows")]
    pub cols: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub bits: u8,
    /// Sparse outlier count to include in the accounting
    #[arg(long, default_value_t = 0)]
    pub nnz: usize,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value = "gauss", value_parser = ["gauss", "heavy_tail_t3"])]
    pub dist: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stored element precision
    #[arg(long, default_value = "f32", value_parser = ["f32", "f64"])]
    pub precision: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("ganq: failed to configure {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("ganq: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 1 i/o, 2 configuration, 3 format, 4 numeric.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<ganq::Error>() {
        return match e {
            ganq::Error::Io(_) => 1,
            ganq::Error::Argument(_) => 2,
            ganq::Error::Format(_) => 3,
            ganq::Error::Data(_) | ganq::Error::NotPositiveDefinite { .. } => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 1;
    }
    2
}
