//! Command-line driver for `rdbs-core`.
//!
//! Settings are resolved from defaults, a preset, an optional TOML file and
//! flags, in that order of increasing priority.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{
    ExperimentConfig, RawCertificate, RawConfig, RawGrid, RawOutput, RawPlant, RawSim, RawTrigger,
};
use crate::error::CliError;
use crate::verify::Fault;

#[derive(Debug, Parser)]
#[command(
    name = "rdbs",
    version,
    about = "Boundary control of a reaction-diffusion PDE under sampled and event-triggered updates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the kernel tables, gains and kernel norms
    Kernels(Settings),
    /// Compute the sampling certificate and the gamma curves
    Certificate(Settings),
    /// Run one closed-loop experiment
    Simulate(Settings),
    /// Run the invariant suite
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Corrupt the kernel set before checking (negate-q, negate-k)
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named parameter set
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, env = "RD_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Number of grid intervals M
    #[arg(long)]
    pub intervals: Option<usize>,

    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// event, periodic, jitter or open-loop
    #[arg(long)]
    pub mode: Option<String>,
    /// Sampling period or jitter diameter (default T*)
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,

    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub vartheta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub m0: Option<f64>,
    #[arg(long = "B", alias = "b")]
    pub b: Option<f64>,
    #[arg(long)]
    pub kappa1: Option<f64>,
    #[arg(long)]
    pub kappa2: Option<f64>,
    #[arg(long)]
    pub kappa3: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub beta3: Option<f64>,

    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of retained modes N
    #[arg(long)]
    pub modes: Option<usize>,
}

impl Settings {
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            preset: self.preset.clone(),
            plant: RawPlant {
                epsilon: self.epsilon,
                lambda: self.lambda,
                q: self.q,
            },
            grid: RawGrid {
                intervals: self.intervals,
            },
            sim: RawSim {
                dt: self.dt,
                horizon: self.horizon,
                mode: self.mode.clone(),
                period: self.period,
                seed: self.seed,
                snapshot_every: self.snapshot_every,
                u0: None,
                uhat0: None,
            },
            trigger: RawTrigger {
                eta: self.eta,
                gamma: self.gamma,
                vartheta: self.vartheta,
                m0: self.m0,
                b: self.b,
                kappa1: self.kappa1,
                kappa2: self.kappa2,
                kappa3: self.kappa3,
                beta1: self.beta1,
                beta2: self.beta2,
                beta3: self.beta3,
            },
            certificate: RawCertificate {
                sigma: self.sigma,
                modes: self.modes,
            },
            output: RawOutput {
                dir: self.out_dir.clone(),
            },
        }
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = self
            .config
            .as_deref()
            .map(RawConfig::from_file)
            .transpose()?;
        ExperimentConfig::resolve(file.as_ref(), &self.to_raw())
    }
}

fn header(out: &mut dyn Write, cfg: &ExperimentConfig) -> std::io::Result<()> {
    writeln!(out, "# resolved configuration")?;
    for line in cfg.echo().lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn list_files(out: &mut dyn Write, files: &[PathBuf]) -> std::io::Result<()> {
    for f in files {
        writeln!(out, "wrote {}", f.display())?;
    }
    Ok(())
}

/// Runs a parsed command, writing the report to `out`. Returns the process
/// exit code for outcomes that are not errors (a failed check yields 3).
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let stdout = |e: std::io::Error| CliError::io(std::path::Path::new("<stdout>"), e);
    match &cli.command {
        Command::Kernels(s) => {
            let cfg = s.resolve()?;
            header(out, &cfg).map_err(stdout)?;
            let o = commands::kernels(&cfg)?;
            writeln!(out, "{}", o.summary).map_err(stdout)?;
            list_files(out, &o.files).map_err(stdout)?;
            Ok(0)
        }
        Command::Certificate(s) => {
            let cfg = s.resolve()?;
            header(out, &cfg).map_err(stdout)?;
            let o = commands::certificate(&cfg)?;
            writeln!(out, "{}", o.summary).map_err(stdout)?;
            list_files(out, &o.files).map_err(stdout)?;
            Ok(0)
        }
        Command::Simulate(s) => {
            let cfg = s.resolve()?;
            header(out, &cfg).map_err(stdout)?;
            let r = commands::simulate(&cfg)?;
            writeln!(out, "{}", r.outputs.summary).map_err(stdout)?;
            for c in &r.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                writeln!(out, "[{tag}] {}: {}", c.name, c.detail).map_err(stdout)?;
            }
            list_files(out, &r.outputs.files).map_err(stdout)?;
            Ok(0)
        }
        Command::Verify(v) => {
            let fault = match v.inject_fault.as_deref() {
                None => None,
                Some(name) => Some(Fault::parse(name).ok_or_else(|| {
                    CliError::Config(format!("inject-fault: unknown fault {name:?}"))
                })?),
            };
            let cfg = ExperimentConfig::preset("paper-event-eta1")?;
            let mut ks = commands::kernel_set(&cfg)?;
            if let Some(f) = fault {
                f.apply(&mut ks);
            }
            let report = verify::run_suite(&ks);
            writeln!(out, "{report}").map_err(stdout)?;
            Ok(if report.passed() { 0 } else { 3 })
        }
    }
}
