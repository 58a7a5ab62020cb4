//! `hkr`: file-based front end to the heatkernel library.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "hkr",
    version,
    about = "Heat kernel smoothing, surface inference and topology repair"
)]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, env = "HKR_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest eigenpairs of the cotan Laplacian.
    Eigs(EigsArgs),
    /// Heat kernel regression of a vertex field.
    Smooth(SmoothArgs),
    /// Forward-Euler heat diffusion of a vertex field.
    Diffuse(DiffuseArgs),
    /// Iterated one-ring Gaussian kernel smoothing.
    Iterate(IterateArgs),
    /// Truncated heat kernel between two vertices.
    KernelEval(KernelEvalArgs),
    /// Compare the spectrum of a unit-sphere mesh with spherical harmonics.
    SphereValidate(SphereValidateArgs),
    /// Gibbs ringing of harmonic expansions of a band step.
    Gibbs(GibbsArgs),
    /// Vertexwise F statistic with random field theory correction.
    Rft(RftArgs),
    /// Two-group detection study on the T-junction.
    Simulate(SimulateArgs),
    /// Largest component followed by slice-wise closings.
    Topofix(TopofixArgs),
    /// Marching cubes surface of a binary volume.
    Extract(ExtractArgs),
    /// Counts, Euler characteristic and manifold checks of a mesh.
    ValidateMesh(ValidateMeshArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Auto,
    Krylov,
    Dense,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitArg {
    /// Vertexwise least squares.
    Lse,
    /// Projection with the mass matrix.
    Mass,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BasisArgs {
    /// Eigenpairs beyond the constant one.
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    /// Directory with `eigenvalues.csv` and `eigenvectors.csv` from `eigs`.
    #[arg(long)]
    pub eigs: Option<PathBuf>,
    /// Relative residual bound of each eigenpair.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    pub solver: SolverArg,
    /// Seed of the starting block.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EigsArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SmoothArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// CSV with a `value` column, one row per vertex.
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, value_enum, default_value_t = FitArg::Lse)]
    pub fit: FitArg,
    /// Also write the fitted coefficients (index, beta).
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiffuseArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    /// Euler step; defaults to sigma/100.
    #[arg(long)]
    pub step: Option<f64>,
    /// Replace the mass matrix by its row sums.
    #[arg(long)]
    pub lump_mass: bool,
    /// Keep the requested step even above the stability limit.
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IterateArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    /// Total bandwidth over all passes.
    #[arg(long)]
    pub sigma: f64,
    /// Number of passes.
    #[arg(long = "iterations", short = 'm', default_value_t = 100)]
    pub iterations: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct KernelEvalArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub q: usize,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Also write the kernel column `K(·, q)` as a field CSV.
    #[arg(long)]
    pub column: Option<PathBuf>,
    /// JSON result file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SphereValidateArgs {
    /// Unit-sphere mesh; an icosphere is generated when absent.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub subdivisions: u32,
    #[arg(long, default_value_t = 5)]
    pub max_degree: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GibbsArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub subdivisions: u32,
    /// Largest harmonic degree.
    #[arg(long, default_value_t = 30)]
    pub degree: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RftArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Field CSVs of the first group.
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub group1: Vec<PathBuf>,
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub group2: Vec<PathBuf>,
    /// Smoothing bandwidth applied to the fields.
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum StudyArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON configuration; overrides every study flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset: 1 for noise sd 2 and sigma 0.5, 2 for noise sd 0.5 and sigma 0.1.
    #[arg(long, value_enum, default_value_t = StudyArg::One)]
    pub study: StudyArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long = "iterations", short = 'm')]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Derive the threshold from the mesh geometry at level 0.05.
    #[arg(long)]
    pub rft_threshold: bool,
    /// Comma-separated subset of raw, heat_kernel, iterated, diffusion.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "raw,heat_kernel,iterated,diffusion"
    )]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 20.0)]
    pub arm_length: f64,
    #[arg(long, default_value_t = 8.0)]
    pub width: f64,
    /// Vertices per unit length.
    #[arg(long, default_value_t = 1.0)]
    pub resolution: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ConnectivityArg {
    #[value(name = "6")]
    Six,
    #[value(name = "26")]
    TwentySix,
}

#[derive(Debug, Args, Serialize)]
pub struct TopofixArgs {
    /// Raw voxel file.
    #[arg(long)]
    pub vol: PathBuf,
    /// JSON sidecar; defaults to the raw path with a `.json` extension.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Closing radius in voxels.
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    #[arg(long, value_enum, default_value_t = ConnectivityArg::TwentySix)]
    pub connectivity: ConnectivityArg,
    /// Output raw file; its sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub vol: PathBuf,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Output mesh, `.off` or `.ply`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateMeshArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// JSON report; printed to stdout as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hkr: {e}");
            ExitCode::from(if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_VALIDATION
            })
        }
    }
}
