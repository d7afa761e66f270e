//! `silgrad` — render silhouettes, generate multi-view targets, inspect
//! per-parameter gradient maps, verify gradients against the exact
//! oracles, and fit rigid or articulated poses by silhouette consistency.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or
//! configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{FitArgs, GradParam, ModelKind};
use config::SceneConfig;

#[derive(Parser)]
#[command(name = "silgrad", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scene configuration (JSON); defaults apply for omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the worker thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render ground-truth multi-view silhouettes plus cameras.json and
    /// truth.json into a data directory.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Which parameterization poses the ground truth.
        #[arg(long, value_enum, default_value = "auto")]
        model: ModelKind,
        /// Also write PNG previews.
        #[arg(long)]
        png: bool,
    },
    /// One forward pass to a PGM file.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Camera index.
        #[arg(long, default_value_t = 0)]
        view: usize,
        #[arg(long, value_enum, default_value = "auto")]
        model: ModelKind,
        /// Also write a PNG next to the PGM.
        #[arg(long)]
        png: bool,
        /// Also write the raw little-endian f32 dump (bit-exact values).
        #[arg(long)]
        float_dump: Option<PathBuf>,
    },
    /// Per-pixel gradient map for a scalar parameter, as a
    /// diverging-colormap PNG plus an f32 dump.
    Gradmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        param: GradParam,
        #[arg(long, default_value_t = 0)]
        view: usize,
        #[arg(long, value_enum, default_value = "auto")]
        model: ModelKind,
    },
    /// Run the analytic-vs-finite-difference oracle suites; exits 0 iff
    /// every suite is within tolerance.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Edge/pixel configurations to sample.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Fit rigid parameters (translation, rotation, scale) to the targets.
    FitRigid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitCliArgs,
    },
    /// Fit articulated pose parameters (per-joint axis-angle) to the targets.
    FitPose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitCliArgs,
    },
}

#[derive(Args)]
struct FitCliArgs {
    /// Output directory for trace.csv, final.obj, and overlays.
    #[arg(long)]
    out: PathBuf,
    /// gen-data directory with cameras.json and target_*.f32; targets are
    /// self-generated from the config when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides optimizer.iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Overrides optimizer.alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Start from the ground-truth parameters instead of the config init.
    #[arg(long)]
    init_at_truth: bool,
    /// Also write per-view PNG renders of the final mesh.
    #[arg(long)]
    png: bool,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

fn load_config(common: &Common) -> Result<SceneConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => SceneConfig::load(path).map_err(|e| Failure::Usage(format!("{e:#}")))?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(threads) = common.threads {
        config.threads = Some(threads);
    }
    if let Some(threads) = config.threads {
        // First initialization wins; later calls fail when the global pool
        // already exists, which only happens in-process during tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let runtime = |e: anyhow::Error| Failure::Runtime(e);
    match cli.command {
        Command::GenData {
            common,
            out,
            model,
            png,
        } => {
            let config = load_config(&common)?;
            commands::gen_data(config, &out, model, png).map_err(runtime)
        }
        Command::Render {
            common,
            out,
            view,
            model,
            png,
            float_dump,
        } => {
            let config = load_config(&common)?;
            commands::render(config, &out, view, model, png, float_dump.as_deref()).map_err(runtime)
        }
        Command::Gradmap {
            common,
            out,
            param,
            view,
            model,
        } => {
            let config = load_config(&common)?;
            commands::gradmap(config, &out, param, view, model).map_err(runtime)
        }
        Command::Gradcheck { common, trials } => {
            let config = load_config(&common)?;
            commands::gradcheck(trials, config.seed).map_err(runtime)
        }
        Command::FitRigid { common, fit } => {
            let config = load_config(&common)?;
            let seed = config.seed;
            commands::fit_command(
                config,
                ModelKind::Rigid,
                FitArgs {
                    out: fit.out,
                    data: fit.data,
                    iterations: fit.iterations,
                    alpha: fit.alpha,
                    init_at_truth: fit.init_at_truth,
                    seed,
                    png: fit.png,
                },
            )
            .map_err(runtime)
        }
        Command::FitPose { common, fit } => {
            let config = load_config(&common)?;
            let seed = config.seed;
            commands::fit_command(
                config,
                ModelKind::Pose,
                FitArgs {
                    out: fit.out,
                    data: fit.data,
                    iterations: fit.iterations,
                    alpha: fit.alpha,
                    init_at_truth: fit.init_at_truth,
                    seed,
                    png: fit.png,
                },
            )
            .map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(error)) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
