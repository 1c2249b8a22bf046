//! `sieve`: simulate, reconstruct and analyse diffractive-lens spectral
//! imaging experiments from a JSON scenario.
//!
//! Exit codes: 0 success, 2 usage, config or data error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod output;
pub mod units;

use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use sieve_core::par;

use crate::commands::{Run, Timer};
use crate::config::{ScenarioConfig, SceneConfig, Selector};
use crate::output::OutputDir;

pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "sieve",
    version,
    about = "Diffractive-lens spectral imaging simulator and reconstruction toolkit"
)]
pub struct Cli {
    /// Scenario JSON; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `sieve-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Also write wall-clock timings (`timing.csv`).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the PSF bank, previews and a per-frame optics summary.
    Psf,
    /// Render the scene (or read `--cube`) and simulate noisy frames.
    Simulate {
        #[arg(long)]
        cube: Option<PathBuf>,
    },
    /// Reconstruct a cube from measurements; `--truth` adds PSNR/SSIM.
    Reconstruct {
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a study; the selector defaults to the config's `experiment`.
    Analyze {
        #[arg(value_enum)]
        selector: Option<Selector>,
    },
    /// Compare two cubes.
    Metrics {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Psf => "psf",
            Command::Simulate { .. } => "simulate",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Analyze { .. } => "analyze",
            Command::Metrics { .. } => "metrics",
        }
    }
}

/// Loads the config and folds the command-line overrides into it, so the
/// snapshot records everything the run depends on.
pub fn resolve(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    match &cli.command {
        Command::Simulate { cube: Some(c) } => cfg.scene = SceneConfig::File { path: c.clone() },
        Command::Reconstruct { measurements, truth } => {
            if let Some(m) = measurements {
                cfg.inputs.measurements = Some(m.clone());
            }
            if let Some(t) = truth {
                cfg.inputs.truth = Some(t.clone());
            }
        }
        Command::Analyze { selector: Some(s) } => cfg.experiment = Some(*s),
        Command::Metrics { reference, estimate } => {
            if let Some(r) = reference {
                cfg.inputs.truth = Some(r.clone());
            }
            if let Some(e) = estimate {
                cfg.inputs.estimate = Some(e.clone());
            }
        }
        _ => {}
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    let root = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("sieve-out"));
    let out = OutputDir::acquire(&root)?;
    par::with_threads(cli.threads, || {
        let mut run = Run {
            command: cli.command.name(),
            cfg: &cfg,
            out: &out,
            timer: Timer::new(cli.timing),
        };
        match &cli.command {
            Command::Psf => commands::psf(&mut run),
            Command::Simulate { .. } => commands::simulate(&mut run),
            Command::Reconstruct { .. } => commands::reconstruct(&mut run),
            Command::Analyze { .. } => {
                let s = cfg
                    .experiment
                    .ok_or_else(|| anyhow!("no study selected: name one or set `experiment` in the config"))?;
                commands::analyze(&mut run, s)
            }
            Command::Metrics { .. } => commands::metrics(&mut run),
        }
    })
}

/// 3 when a solver broke down numerically, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|c| c.downcast_ref::<sieve_core::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}
