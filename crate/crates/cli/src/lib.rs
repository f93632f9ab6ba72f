//! Command-line front end: config intake, experiment orchestration and
//! CSV, JSON and SVG output.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use blowup_core::{Error, Preset};
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

use config::{ConfigError, RunConfig};

/// Bad invocation: missing `--config`, unknown preset, malformed seed.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(
    name = "blowup-lab",
    version,
    about = "Radial blow-up solutions of a quasilinear p-Laplacian system",
    after_help = "Exit codes: 0 ok, 1 other failure, 2 invalid parameters or config \
                  (domain, delta = 0, parse errors), 3 no blow-up within budget, \
                  4 spectral failure.\n\
                  BLOWUP_LAB_SEED fixes the equilibrium search start grid.\n\
                  stdout carries only the manifest path; diagnostics go to stderr."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`; default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Initial value v(0) (overrides `v0`; for sweep, a single-point list).
    #[arg(long, global = true)]
    pub v0: Option<f64>,
    /// Built-in parameter set: A, B, C (C-left, C-right).
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
pub enum Command {
    /// Exponents, constants and regime.
    Params,
    /// Solve, normalize and verify one radial solution.
    Solve,
    /// Equilibria, spectra and log-time trajectories.
    Flow,
    /// Convergence plots of (a, b, c) for the presets.
    Figures,
    /// Blow-up radius over a list of v0.
    Sweep,
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::DomainViolation(_) | Error::DeltaZero(_) | Error::RegimeMismatch { .. } => 2,
                Error::NoBlowupWithinBudget(_) => 3,
                Error::SpectralFailure(_) => 4,
                _ => 1,
            };
        }
    }
    1
}

fn load(cli: &Cli) -> anyhow::Result<Option<RunConfig>> {
    let mut cfg = match &cli.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    if let Some(name) = &cli.preset {
        let params = commands::preset_params(name)?;
        let c = cfg.get_or_insert_with(|| RunConfig::with_params(params));
        c.params = params;
    }
    if let (Some(c), Some(v0)) = (cfg.as_mut(), cli.v0) {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(UsageError(format!("--v0 must be positive, got {v0}")).into());
        }
        c.v0 = v0;
        c.sweep_v0 = vec![v0];
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> anyhow::Result<PathBuf> {
    let cfg = load(cli)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let need = || {
        cfg.as_ref()
            .ok_or_else(|| UsageError("--config <file> (or --preset) is required".into()))
    };
    let manifest = match cli.command {
        Command::Params => commands::params(need()?)?,
        Command::Solve => commands::solve(need()?, &dir)?,
        Command::Flow => commands::flow(need()?, &dir)?,
        Command::Sweep => commands::sweep(need()?, &dir)?,
        Command::Figures => {
            let only = match &cli.preset {
                Some(name) => Some(Preset::from_name(name).ok_or_else(|| {
                    UsageError(format!("figures takes --preset A, B or C, got `{name}`"))
                })?),
                None => None,
            };
            let from_file = match &cli.config {
                Some(_) => cfg.as_ref(),
                None => None,
            };
            commands::figures(from_file, only, &dir)?
        }
    };
    let mut manifest = manifest;
    if let Some(c) = &manifest.config {
        std::fs::write(dir.join("config.txt"), c.serialize())?;
        manifest.files.push("config.txt".into());
    }
    manifest::write(&manifest, &dir)
}
