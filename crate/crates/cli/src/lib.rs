//! Command-line front end: configuration, subcommands and output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod selfcheck;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use bilateral_core::approx::Scheme;
use config::{RunConfig, DEFAULT_PRESET};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "bilateral",
    version,
    about = "Successive approximations, error bounds and region estimates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named preset; replaces the model of the config.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Number of approximation levels.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Approximation scheme, A or B.
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,
    /// Forcing amplitude.
    #[arg(long, global = true)]
    pub f0: Option<f64>,
    /// Initial time.
    #[arg(long, global = true)]
    pub t0: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for region sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Direct solution, approximation and bilateral bounds over time.
    Simulate,
    /// Error bounds Z1, Z2, Z3 and the solution-norm bound.
    Bounds,
    /// Region boundary per method.
    Region,
    /// Region boundaries for several initial times.
    #[command(name = "sweep-t0")]
    SweepT0,
    /// Built-in oracle checks.
    Selfcheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Bounds => "bounds",
            Command::Region => "region",
            Command::SweepT0 => "sweep-t0",
            Command::Selfcheck => "selfcheck",
        }
    }
}

impl Cli {
    /// Config file (or preset default) with command-line overrides applied.
    pub fn effective_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::from_preset(self.preset.as_deref().unwrap_or(DEFAULT_PRESET)),
        };
        if let Some(name) = &self.preset {
            cfg.model.preset = Some(name.clone());
            cfg.model.inline = None;
        }
        if let Some(m) = self.m {
            cfg.approximation.m = m;
        }
        if let Some(s) = self.scheme {
            cfg.approximation.scheme = s;
        }
        if let Some(f0) = self.f0 {
            match &mut cfg.model.inline {
                Some(inline) => inline.f0 = f0,
                None => cfg.model.overrides.a = Some(f0),
            }
        }
        if let Some(t0) = self.t0 {
            cfg.approximation.t0 = t0;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Runs one command and returns the lines to print.
pub fn execute(cli: &Cli) -> CliResult<Vec<String>> {
    let cfg = cli.effective_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(cli.command, &cfg))
}

pub fn run(command: Command, cfg: &RunConfig) -> CliResult<Vec<String>> {
    if command == Command::Selfcheck {
        let results = selfcheck::run_checks(&cfg.approximation.integrator_options());
        let failed = results.iter().filter(|r| !r.passed).count();
        let lines: Vec<String> = results.iter().map(|r| r.line()).collect();
        if failed > 0 {
            for l in &lines {
                eprintln!("{l}");
            }
            return Err(CliError::Check(failed));
        }
        return Ok(lines);
    }
    let out = match command {
        Command::Simulate => commands::simulate(cfg)?,
        Command::Bounds => commands::bounds(cfg)?,
        Command::Region => commands::region(cfg)?,
        Command::SweepT0 => commands::sweep(cfg)?,
        Command::Selfcheck => unreachable!(),
    };
    let written = out.commit(command.name(), &cfg.to_toml())?;
    Ok(written.iter().map(|p| format!("wrote {}", p.display())).collect())
}
