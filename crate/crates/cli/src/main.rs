//! `pdl1`: run the pipeline stage by stage or end to end.

mod commands;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "pdl1", version, about = "PD-L1 whole-slide image classification")]
struct Cli {
    /// Run every stage on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Paperlike,
    Small,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AggregateMode {
    Mean,
    Cluster,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Family {
    Rf,
    Svm,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with manifests and ground truth.
    Synth {
        #[arg(long, value_enum, default_value = "paperlike", conflicts_with = "config")]
        preset: PresetArg,
        /// Corpus description (TOML) used instead of a preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cut a slide into tiles and write them with their 64x64 downsamples.
    Tile {
        #[arg(long)]
        slide: PathBuf,
        #[arg(long, default_value_t = 256)]
        tile_size: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Locate the tumor region of one slide.
    Roi {
        #[arg(long)]
        slide: PathBuf,
        #[arg(long, default_value_t = 0.85)]
        f_roi: f64,
        /// Tile-grid mask, 255 inside the region. A `.float.txt` sidecar
        /// with per-tile scores is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        artifact_mask: Option<PathBuf>,
    },
    /// Brown-distance histograms of every slide in a manifest.
    FeaturizeHist {
        #[arg(long)]
        manifest: PathBuf,
        /// Precomputed `<slide_id>.roi.png` masks; regions are detected when absent.
        #[arg(long)]
        roi_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.85)]
        f_roi: f64,
        /// Ignore the manifest's artifact masks.
        #[arg(long)]
        no_artifact_masks: bool,
        /// Raw counts.
        #[arg(long)]
        out: PathBuf,
        /// Log-normalized features for the ML classifiers.
        #[arg(long)]
        ml_out: Option<PathBuf>,
    },
    /// Fit the two-threshold baseline on histogram counts.
    TrainBaseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Apply a baseline model.
    PredictBaseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the convolutional autoencoder on region tiles.
    TrainCae {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        roi_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.85)]
        f_roi: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed the region tiles of one slide.
    Embed {
        #[arg(long)]
        cae: PathBuf,
        #[arg(long)]
        slide: PathBuf,
        /// Region mask; detected when absent.
        #[arg(long)]
        roi: Option<PathBuf>,
        #[arg(long, default_value_t = 0.85)]
        f_roi: f64,
        /// Defaults to the slide file stem.
        #[arg(long)]
        slide_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slide-level features from per-tile embeddings.
    Aggregate {
        #[arg(long, value_enum)]
        mode: AggregateMode,
        /// Directory of `<slide_id>.emb` files.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, required_if_eq("mode", "cluster"))]
        cluster_model: Option<PathBuf>,
        /// Fit the cluster model instead of loading it.
        #[arg(long)]
        fit: bool,
        /// Slides used for fitting; every embedding file when absent.
        #[arg(long)]
        train_manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, default_value_t = 90.0)]
        t_op: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search with stratified cross-validation, then refit.
    TrainClf {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        family: Family,
        /// Grid file (TOML); built-in grid when absent.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained classifier.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "model")]
        name: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a full experiment into a run directory.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Print the text report of a finished run.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn configure_threads(deterministic: bool) -> Result<()> {
    let threads = if deterministic {
        Some(1)
    } else {
        match std::env::var("PDL1_THREADS") {
            Ok(v) => Some(v.parse::<usize>().with_context(|| format!("PDL1_THREADS=`{v}`"))?),
            Err(_) => None,
        }
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    configure_threads(cli.deterministic)?;
    commands::run(cli.command)
}
