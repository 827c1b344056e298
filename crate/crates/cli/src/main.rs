//! `visfield` command-line pipeline: bake, train, reconstruct, relight, evaluate and the
//! direction-count interpolation experiment.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for bad input, bad usage or I/O failures.
const EXIT_USAGE: u8 = 2;
/// Exit status when a computation produced NaN or infinity.
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "visfield", version, about = "Discretized visibility fields: bake, fit, reconstruct and relight")]
struct Cli {
    /// Worker threads; `--threads 1` gives bitwise-reproducible artifacts.
    #[arg(long, global = true, env = "VISFIELD_THREADS")]
    threads: Option<usize>,
    /// Pipeline configuration JSON; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ray-trace ground-truth samples of a watertight mesh into a `.vfld` file.
    Bake(BakeArgs),
    /// Fit the field to a bake; writes the model and a loss-curve CSV.
    Train(TrainArgs),
    /// Extract the occupancy isosurface of a trained model as a PLY mesh.
    Reconstruct(ReconstructArgs),
    /// Relight a mesh with SH transfer built from model or ray-traced visibility.
    Relight(RelightArgs),
    /// Compare meshes or images.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Interpolation accuracy of top-k visibility lookup across direction counts.
    InterpAcc(InterpArgs),
}

#[derive(Args, Debug)]
struct BakeArgs {
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of directions `n`.
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long)]
    near: Option<usize>,
    #[arg(long)]
    uniform: Option<usize>,
    #[arg(long)]
    surface: Option<usize>,
    /// Near-surface displacement σ, as a fraction of the longest bbox edge.
    #[arg(long)]
    sigma: Option<f64>,
}

/// Where the reference views come from: a saved scene, or renders of a mesh.
#[derive(Args, Debug, Clone)]
struct ViewArgs {
    /// Mesh rendered to produce the reference views (also fixes the output frame).
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Saved scene JSON with cameras and images, used instead of rendering.
    #[arg(long, conflicts_with = "mesh")]
    views: Option<PathBuf>,
    #[arg(long)]
    num_views: Option<usize>,
    #[arg(long)]
    view_size: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Baked `.vfld` samples.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    views: ViewArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss-curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    max_lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Train with the transfer-loss weight set to zero.
    #[arg(long)]
    no_transfer_loss: bool,
    /// Also save the reference views used for training into this directory.
    #[arg(long)]
    save_views: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    views: ViewArgs,
    /// Sampling grid resolution per axis.
    #[arg(long, value_parser = clap::value_parser!(u32).range(8..=512))]
    res: Option<u32>,
    /// Drop surface pieces smaller than this fraction of the largest one's area (0 keeps all).
    #[arg(long)]
    min_component: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ImageFormat {
    Pfm,
    Ppm,
}

#[derive(Args, Debug)]
struct RelightArgs {
    /// Mesh to relight (always required; it is also rendered for the model's reference views).
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Trained model providing per-vertex visibility.
    #[arg(long, required_unless_present = "oracle")]
    model: Option<PathBuf>,
    /// Use ray-traced visibility instead of a model.
    #[arg(long, conflicts_with = "model")]
    oracle: bool,
    /// Light JSON: `{"sh": [[9 floats] × 3]}` or `{"envmap": "<image>"}`.
    #[arg(long)]
    light: Option<PathBuf>,
    /// Also write irradiance (albedo-free) images.
    #[arg(long)]
    irradiance: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pfm")]
    format: ImageFormat,
    #[arg(long)]
    num_views: Option<usize>,
    #[arg(long)]
    view_size: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// NC, Chamfer-L1 and F-score of a predicted mesh against ground truth.
    Geometry(EvalGeometryArgs),
    /// PSNR and SSIM of a predicted image against ground truth.
    Image(EvalImageArgs),
}

#[derive(Args, Debug)]
struct EvalGeometryArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// F-score threshold as a fraction of the ground truth's longest bbox edge.
    #[arg(long, default_value_t = 0.005)]
    tau: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalImageArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Single-channel mask; pixels with mask > 0 are compared.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InterpArgs {
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Comma-separated direction counts.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 256)]
    test_dirs: usize,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .any(|c| matches!(c.downcast_ref::<visfield::Error>(), Some(visfield::Error::NonFinite(_))));
    if numeric {
        EXIT_NUMERIC
    } else {
        EXIT_USAGE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("thread pool is configured once");
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
