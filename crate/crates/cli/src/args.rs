use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "sparsemap",
    version,
    about = "Post-processing for sparse SLAM point-cloud maps"
)]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene bundle.
    Synth(SynthArgs),
    /// Remove outliers with the radius or statistical filter.
    Filter(FilterArgs),
    /// Densify a cloud with one of the MLS upsamplers.
    Upsample(UpsampleArgs),
    /// Run a multi-stage pipeline.
    Pipeline(PipelineArgs),
    /// Scale-align a map and measure its deviation from ground truth.
    Eval(EvalArgs),
    /// Evaluate every combination of a parameter grid.
    Sweep(SweepArgs),
    /// Convert a cloud to an occupancy octree leaf list.
    Octree(OctreeArgs),
    /// Collect raw-versus-processed deviation pairs from sweep outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML); defaults to the built-in corridor.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub sparse_fraction: Option<f64>,
    #[arg(long)]
    pub gt_density: Option<f64>,
    /// Write the effective scene description here.
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

/// Stage parameters; each one overrides the matching field of every stage
/// of that kind.
#[derive(Debug, Args, Default, Clone)]
pub struct StageFlags {
    /// Radius filter: neighborhood radius.
    #[arg(long = "r")]
    pub r: Option<f64>,
    /// Radius filter: minimum neighbor count.
    #[arg(long = "b")]
    pub b: Option<usize>,
    /// Statistical filter: neighbors examined.
    #[arg(long = "l")]
    pub l: Option<usize>,
    /// Statistical filter: standard-deviation multiplier.
    #[arg(long = "h")]
    pub h: Option<f64>,
    /// Sample Local Plane: upsampling radius.
    #[arg(long = "u_r")]
    pub u_r: Option<f64>,
    /// Sample Local Plane: step size.
    #[arg(long = "u_sz")]
    pub u_sz: Option<f64>,
    /// Sample Local Plane: maximum ring count.
    #[arg(long = "u_s")]
    pub u_s: Option<usize>,
    /// Random Uniform Density: target points per neighborhood.
    #[arg(long = "d")]
    pub d: Option<usize>,
    /// Voxel Grid Dilation: voxel edge.
    #[arg(long = "s_vs")]
    pub s_vs: Option<f64>,
    /// Voxel Grid Dilation: dilation iterations.
    #[arg(long = "d_i")]
    pub d_i: Option<usize>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct MlsFlags {
    /// MLS search radius (default: --radius-factor x median spacing).
    #[arg(long)]
    pub search_radius: Option<f64>,
    #[arg(long)]
    pub radius_factor: Option<f64>,
    /// Automatic voxel edge in units of median spacing.
    #[arg(long)]
    pub voxel_factor: Option<f64>,
    /// Polynomial order of the local fit (1 or 2).
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Keep the input points where they are instead of projecting them.
    #[arg(long)]
    pub no_project_originals: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterMethod {
    Radius,
    Statistical,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub method: FilterMethod,
    /// Also write one inlier/outlier tag per input point.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub stage: StageFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpsampleMethod {
    SampleLocalPlane,
    RandomUniformDensity,
    VoxelGridDilation,
}

#[derive(Debug, Args)]
pub struct UpsampleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub method: UpsampleMethod,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub stage: StageFlags,
    #[command(flatten)]
    pub mls: MlsFlags,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Pipeline description (TOML); defaults to statistical filtering
    /// followed by voxel grid dilation.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-stage point counts here (CSV).
    #[arg(long)]
    pub stages_csv: Option<PathBuf>,
    /// Record wall-clock stage times in the stage table.
    #[arg(long)]
    pub timing: bool,
    /// Write the effective pipeline description here.
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
    #[command(flatten)]
    pub stage: StageFlags,
    #[command(flatten)]
    pub mls: MlsFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scene bundle supplying any input not given explicitly.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub estimated: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub est_traj: Option<PathBuf>,
    #[arg(long)]
    pub gt_traj: Option<PathBuf>,
    /// Correspondence gate (default: 2x median ground-truth spacing).
    #[arg(long)]
    pub max_dist: Option<f64>,
    /// Write the result as a one-row CSV.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep description (TOML); defaults to the built-in grid.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Read the data from this scene bundle instead of the configured source.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Output directory for metrics.csv, baseline.csv and deviation_pairs.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Sequence name in the plot data (default: output directory name).
    #[arg(long)]
    pub sequence: Option<String>,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OctreeArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Leaf edge upper bound.
    #[arg(long)]
    pub resolution: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep output directories, one per sequence.
    #[arg(long, short, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}
