//! `viewseg` command-line front end.

mod commands;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "viewseg", version, about = "View-based semantic segmentation of triangle meshes")]
struct Cli {
    /// JSON run configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a mesh into range-scan views and write them as meshes.
    Decompose {
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the view network, then the CRF, on a directory of labeled meshes.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint, including its optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Skip the CRF stage.
        #[arg(long)]
        no_crf: bool,
    },
    /// Segment a mesh with a trained checkpoint.
    Infer {
        mesh: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output the argmax of the aggregated predictions.
        #[arg(long)]
        no_crf: bool,
    },
    /// Compare predicted labels against a labeled mesh.
    Eval {
        /// Label file `{"labels": [...], "L": n}`.
        pred: PathBuf,
        /// Mesh carrying ground-truth labels.
        gt: PathBuf,
        /// Report the parameter count of this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate labeled synthetic meshes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, value_enum, default_value_t = Shape::Humanoid)]
        shape: Shape,
        /// Normal jitter as a fraction of the mean edge length.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Humanoid,
    TwoSpheres,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
