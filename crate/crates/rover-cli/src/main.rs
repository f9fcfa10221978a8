//! `rover` — synthetic manipulation videos, ground-truth progress labels,
//! recursive reasoning runs, and evaluation reports.
//!
//! The pipeline is five subcommands over one output root:
//!
//! ```text
//! rover gen    --out data                 # synthesize the video dataset
//! rover label  --out data                 # ground-truth progress labels
//! rover run    --out data --method rover  # per-frame reasoning predictions
//! rover eval   --out data --method rover  # score predictions, write report
//! rover report --out data --method rover  # re-aggregate existing scores
//! ```
//!
//! Exit codes: 0 on success, 1 when some videos failed but the batch
//! finished (each failure is recorded on disk and stderr), 2 on invalid
//! input or configuration.

mod config;
mod pipeline;
mod render;
mod scoring;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use rover_core::engine::{Method, RunConfig};

use crate::config::{EvalConfig, GenConfig, LabelConfig, RunFileConfig};
use crate::pipeline::{BackendKind, Outcome};

#[derive(Parser)]
#[command(
    name = "rover",
    version,
    about = "Synthetic manipulation-video pipeline: dataset, labels, reasoning runs, reports",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic video dataset.
    Gen {
        /// Output root; videos land under OUT/videos.
        #[arg(long)]
        out: PathBuf,
        /// Dataset seed (overrides the config file).
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config: {seed, workers, tasks, videos_per_level}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Regenerate videos whose files already exist.
        #[arg(long)]
        force: bool,
    },
    /// Compute ground-truth progress labels for generated videos.
    Label {
        /// Output root holding the dataset.
        #[arg(long)]
        out: PathBuf,
        /// JSON config: {workers}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Relabel videos that already have labels.
        #[arg(long)]
        force: bool,
    },
    /// Run a reasoning method over every video and store predictions.
    Run {
        /// Output root holding the dataset; predictions land under
        /// OUT/runs/<method>.
        #[arg(long)]
        out: PathBuf,
        /// Reasoning method (default rover).
        #[arg(long)]
        method: Option<String>,
        /// Frame-description backend: oracle (default) or remote.
        #[arg(long)]
        backend: Option<String>,
        /// Run seed; per-video engine seeds derive from it.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config: {seed, workers, method, backend, engine, noise,
        /// remote}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Recompute videos that already have output, and discard the run
        /// directory when its configuration differs.
        #[arg(long)]
        force: bool,
        /// Serve every model request from the recorded cache; a cache miss
        /// is an error instead of a network call.
        #[arg(long)]
        replay: bool,
    },
    /// Score a run's predictions and write per-video metrics plus report
    /// files.
    Eval {
        /// Output root holding the dataset and runs.
        #[arg(long)]
        out: PathBuf,
        /// Method whose run to score (default rover).
        #[arg(long)]
        method: Option<String>,
        /// JSON config: {workers, method}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-aggregate existing per-video metrics into the report files.
    Report {
        /// Output root holding the dataset and runs.
        #[arg(long)]
        out: PathBuf,
        /// Method whose metrics to aggregate (default rover).
        #[arg(long)]
        method: Option<String>,
    },
}

fn parse_method(label: &str) -> Result<Method> {
    Method::parse(label).ok_or_else(|| {
        let known: Vec<&str> = Method::ALL.iter().map(|m| m.label()).collect();
        anyhow!("unknown method `{label}` (one of: {})", known.join(", "))
    })
}

fn parse_backend(label: &str) -> Result<BackendKind> {
    BackendKind::parse(label)
        .ok_or_else(|| anyhow!("unknown backend `{label}` (oracle or remote)"))
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Gen {
            out,
            seed,
            config,
            workers,
            force,
        } => {
            let file: GenConfig = config::load(config.as_deref())?;
            let opts = pipeline::GenOpts {
                out,
                seed: seed.or(file.seed).unwrap_or(0),
                tasks: file.tasks,
                videos_per_level: file.videos_per_level,
                force,
            };
            pipeline::with_pool(workers.or(file.workers), move || pipeline::gen(&opts))?
        }
        Command::Label {
            out,
            config,
            workers,
            force,
        } => {
            let file: LabelConfig = config::load(config.as_deref())?;
            let opts = pipeline::LabelOpts { out, force };
            pipeline::with_pool(workers.or(file.workers), move || pipeline::label(&opts))?
        }
        Command::Run {
            out,
            method,
            backend,
            seed,
            config,
            workers,
            force,
            replay,
        } => {
            let file: RunFileConfig = config::load(config.as_deref())?;
            let method = parse_method(method.or(file.method).as_deref().unwrap_or("rover"))?;
            let backend = parse_backend(backend.or(file.backend).as_deref().unwrap_or("oracle"))?;
            let mut engine = RunConfig::default();
            file.engine.apply(&mut engine);
            let opts = pipeline::RunOpts {
                out,
                method,
                backend,
                run_seed: seed.or(file.seed).unwrap_or(0),
                engine,
                noise: file.noise.to_noise(),
                remote: file.remote.to_remote_config(),
                force,
                replay,
            };
            pipeline::with_pool(workers.or(file.workers), move || pipeline::run(&opts))?
        }
        Command::Eval {
            out,
            method,
            config,
            workers,
        } => {
            let file: EvalConfig = config::load(config.as_deref())?;
            let method = parse_method(method.or(file.method).as_deref().unwrap_or("rover"))?;
            let opts = scoring::EvalOpts { out, method };
            pipeline::with_pool(workers.or(file.workers), move || scoring::eval(&opts))?
        }
        Command::Report { out, method } => {
            let method = parse_method(method.as_deref().unwrap_or("rover"))?;
            scoring::report(&scoring::EvalOpts { out, method })
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(_)) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
