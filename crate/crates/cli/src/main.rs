mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use great_core::spectral::LaplacianChoice;

#[derive(Debug, Parser)]
#[command(name = "great", version, about = "Heat kernel signatures, heat-method geodesics and GReAT training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Center a shape and scale it to unit distance spread.
    Standardize {
        #[arg(long)]
        input: PathBuf,
        /// Output shape (.obj or .ply).
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON file for the center and scale.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Heat kernel signature of a standardized shape as an n × T f32 GFLD.
    Hks(HksArgs),
    /// Heat-method geodesic distance from a vertex set or boundary loop.
    Geodesic {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated vertex indices, or `loop:<id>` for a boundary loop.
        #[arg(long)]
        sources: String,
        /// Heat time as a multiple of the squared mean edge length.
        #[arg(long, default_value_t = 1.0)]
        time_mult: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// TAWSS and balanced tertile labels from an [n, 3, T] WSS series.
    Label {
        #[arg(long)]
        wss: PathBuf,
        /// Labels 0/1/2 as an n-vector GFLD.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tawss_out: Option<PathBuf>,
    },
    /// Pre-train the single-branch model to regress HKS from coordinates.
    Pretrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grouped k-fold fine-tuning of the baseline or, with --pretrained, GReAT.
    Finetune {
        #[arg(long)]
        manifest: PathBuf,
        /// Pre-trained weights; a `.json` config sidecar must sit next to them.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Accuracy of predicted labels (or per-point scores) against labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Write synthetic tubes with WSS series, centerlines and a manifest.
    Synth {
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the header metadata of a GFLD, GRWT, shape or JSON file.
    Inspect { path: PathBuf },
}

#[derive(Debug, Args)]
struct HksArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 128)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    times: usize,
    #[arg(long, default_value_t = 1e-2)]
    tmin: f64,
    #[arg(long, default_value_t = 1.0)]
    tmax: f64,
    /// `knn` (the default, as used for training targets) or `cotan` for meshes.
    #[arg(long, default_value = "knn", value_parser = parse_laplacian)]
    laplacian: LaplacianChoice,
    #[arg(long, default_value_t = great_core::spectral::DEFAULT_K_NEIGHBORS)]
    k_neighbors: usize,
    /// Seed of the eigensolver's start block.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the raw signature instead of the per-time z-scores.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_laplacian(s: &str) -> Result<LaplacianChoice, String> {
    s.parse()
}

/// Flags shared by the training commands. Each overrides the config file.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    coarse: Option<usize>,
    /// Eigenpairs kept for HKS targets or features.
    #[arg(long)]
    hks_k: Option<usize>,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    /// Drop coordinates and normals from the input channels.
    #[arg(long)]
    no_geometry: bool,
    /// Add the local radius to the centerline.
    #[arg(long)]
    radius: bool,
    /// Add the explicitly computed HKS.
    #[arg(long)]
    hks: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[UsageError]: {first}");
            return ExitCode::FAILURE;
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
