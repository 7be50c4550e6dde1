//! `dkga` - run orchestration for the coupled Dirac / Klein-Gordon /
//! classical-nucleus workbench.
//!
//! Every subcommand reads a strict flat `key = value` config (see
//! `config.rs` for the vocabulary), writes its data artifacts into
//! `--out-dir`, and always leaves a `manifest.json` behind. Exit codes:
//! 0 success, 1 a gate or verification assertion failed, 2 the invocation
//! or configuration itself is unusable.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::FileConfig;
use dkga::solver::SystemKind;
use manifest::{Flags, RunContext};

#[derive(Debug, Error)]
pub enum CliError {
    /// Broken invocation or configuration; exit 2.
    #[error("{0}")]
    Usage(String),
    /// A hypothesis gate or verification tolerance failed; exit 1.
    #[error("{0}")]
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Gate(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dkga",
    version,
    about = "Pseudospectral workbench for a coupled Dirac / Klein-Gordon / nucleus system"
)]
struct Cli {
    /// Directory for run artifacts; created if absent.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Seed recorded in the manifest; reserved for randomized diagnostics.
    /// Current runs are fully deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread budget, recorded in the manifest. Kernels in this
    /// build run single-threaded; orchestration is always one thread.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Field-driven run along a prescribed nucleus path.
    SimulateSystem1 { config: PathBuf },
    /// Coupled run: the nucleus path is solved by Picard iteration.
    SimulateSystem2 { config: PathBuf },
    /// Quadrature scan of the field split against the direct march.
    VerifyDecomposition { config: PathBuf },
    /// Transform-pair check of the closed-form field kernels.
    VerifyKernels { config: PathBuf },
    /// Samples the homogeneous field's sup norm and fits its decay rate.
    DecayFit { config: PathBuf },
    /// Evaluates every hypothesis gate without running the solver.
    GateReport {
        config: PathBuf,
        /// Which system's gate set to evaluate (1 or 2).
        #[arg(long, default_value_t = 1)]
        system: u8,
    },
    /// Per-node and per-diagnostic deltas between two finished runs.
    Compare {
        manifest_a: PathBuf,
        manifest_b: PathBuf,
        /// When set, fail (exit 1) if the H^s series delta exceeds this.
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            std::process::exit(2);
        }
    }
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let flags = Flags {
        out_dir: cli.out_dir.display().to_string(),
        seed: cli.seed,
        threads: cli.threads,
    };
    match &cli.command {
        Command::SimulateSystem1 { config } => {
            with_config(&cli, flags, "simulate-system1", config, |ctx, file| {
                commands::simulate(ctx, file, SystemKind::FieldOnly)
            })
        }
        Command::SimulateSystem2 { config } => {
            with_config(&cli, flags, "simulate-system2", config, |ctx, file| {
                commands::simulate(ctx, file, SystemKind::Coupled)
            })
        }
        Command::VerifyDecomposition { config } => with_config(
            &cli,
            flags,
            "verify-decomposition",
            config,
            commands::verify_decomposition,
        ),
        Command::VerifyKernels { config } => {
            with_config(&cli, flags, "verify-kernels", config, commands::verify_kernels)
        }
        Command::DecayFit { config } => {
            with_config(&cli, flags, "decay-fit", config, commands::decay_fit_cmd)
        }
        Command::GateReport { config, system } => {
            let system = *system;
            with_config(&cli, flags, "gate-report", config, move |ctx, file| {
                commands::gate_report(ctx, file, system)
            })
        }
        Command::Compare {
            manifest_a,
            manifest_b,
            tol,
        } => {
            let mut ctx = RunContext::new("compare", &cli.out_dir, flags)?;
            let result = commands::compare(&mut ctx, manifest_a, manifest_b, *tol);
            ctx.finish(result)
        }
    }
}

/// Shared run shape: create the context (so a manifest exists even for
/// early failures), load and echo the config, run the command, stamp the
/// manifest.
fn with_config(
    cli: &Cli,
    flags: Flags,
    name: &str,
    config_path: &PathBuf,
    run: impl FnOnce(&mut RunContext, &FileConfig) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new(name, &cli.out_dir, flags)?;
    let result = (|| {
        let bytes = std::fs::read(config_path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", config_path.display()))
        })?;
        ctx.record_input(config_path.display().to_string(), &bytes);
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Usage("config is not valid UTF-8".into()))?;
        let file = FileConfig::parse(&text)?;
        ctx.manifest.config = file.raw_echo();
        run(&mut ctx, &file)
    })();
    ctx.finish(result)
}
