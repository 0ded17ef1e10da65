//! Command-line arguments. Every command's arguments double as its run
//! manifest, so they are serializable.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "gwpcr",
    version,
    about = "Spatially fused compositional regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit at a single penalty level.
    Fit(FitArgs),
    /// Fit a penalty path and select the level by BIC.
    Path(PathArgs),
    /// Replicated method comparison on a simulation design.
    Simulate(SimulateArgs),
    /// Compare two label files.
    Evaluate(EvaluateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
    /// List the bundled simulation designs.
    Designs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GraphArgs {
    /// `from,to` edge list keyed by unit id.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// `id,x,y` centroids; units closer than `--threshold` are adjacent.
    #[arg(long, requires = "threshold")]
    pub centroids: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Rook lattice `RxC` over the data rows in order.
    #[arg(long)]
    pub lattice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// MCP concavity.
    #[arg(long, default_value_t = 3.0)]
    pub gamma: f64,
    /// ADMM step size.
    #[arg(long, default_value_t = 1.0)]
    pub vartheta: f64,
    /// Primal (and dual) residual tolerance.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Also require the dual residual to fall below `--tol`.
    #[arg(long)]
    pub dual_stopping: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Fusion weight scheme: constant, adjacency, exponential or adjusted.
    #[arg(long, default_value = "adjusted")]
    pub scheme: String,
    /// Distance decay for the exponential and adjusted schemes.
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// A single penalty level.
    #[arg(long, conflicts_with_all = ["grid", "auto_grid"])]
    pub lambda: Option<f64>,
    /// Log-spaced grid `min,max,count`.
    #[arg(long, conflicts_with = "auto_grid")]
    pub grid: Option<String>,
    /// Log-spaced grid ending at the smallest level that fuses every unit
    /// (the default).
    #[arg(long)]
    pub auto_grid: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Data CSV: `id, comp_*, x_*, y[, weight]`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value = "gwpcr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated decay values; reports the minimum BIC for each and
    /// keeps the best for the selected fit.
    #[arg(long)]
    pub r_sweep: Option<String>,
    /// Fit grid points independently in parallel instead of warm-starting.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value = "gwpcr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Bundled design name or design JSON file.
    #[arg(long)]
    pub design: String,
    /// Methods to compare (repeatable); defaults to all four.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Decay for the decaying methods; defaults to the design's values.
    #[arg(long)]
    pub r: Option<f64>,
    /// Number of replications.
    #[arg(long = "R", default_value_t = 100)]
    pub replications: u64,
    /// Overrides the design's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "gwpcr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// `id,cluster` ground truth.
    #[arg(long)]
    pub truth: PathBuf,
    /// `id,cluster` estimate.
    #[arg(long)]
    pub estimate: PathBuf,
    /// True cluster count for RCC; defaults to the count in the truth file.
    #[arg(long)]
    pub true_k: Option<usize>,
    #[arg(long, default_value = "gwpcr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
