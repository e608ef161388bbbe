//! Command-line front end: TOML configuration, sweeps over the closed-loop
//! model, and CSV output.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use optofb_core::Error;

pub use commands::RunContext;
pub use config::Config;

#[derive(Debug, Parser)]
#[command(name = "optofb", version, about = "Feedback cooling of a microwave optomechanical oscillator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Heterodyne and displacement spectra for each gain of the ladder.
    Spectrum(Common),
    /// One summary row per point of the `[sweep]` range.
    Sweep(Common),
    /// Occupation budget at the configured operating point.
    Occupation(Common),
    /// Closed-loop damping over a phase by gain grid.
    StabilityMap(Common),
    /// Power, gain and bath-occupation calibration.
    Calibrate(Common),
    /// Cross-validate the frequency-domain solution against a simulation.
    OracleCompare(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration, or `paper-defaults` for the built-in one.
    #[arg(long, default_value = config::PAPER_DEFAULTS)]
    pub config: String,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for the stochastic oracle; overrides `oracle.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit the timestamp metadata line so reruns are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Spectrum(c)
            | Command::Sweep(c)
            | Command::Occupation(c)
            | Command::StabilityMap(c)
            | Command::Calibrate(c)
            | Command::OracleCompare(c) => c,
        }
    }
}

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_UNSTABLE: u8 = 3;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameters(_) => EXIT_CONFIG,
        Error::Unstable { .. } => EXIT_UNSTABLE,
        _ => EXIT_NUMERICAL,
    }
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let common = cli.command.common();
    if let Some(n) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool already initialized: {e}");
        }
    }
    let config = match Config::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let ctx = RunContext { config, out: common.out.clone(), seed: common.seed, timestamp: !common.no_timestamp };
    let result = match &cli.command {
        Command::Spectrum(_) => commands::cmd_spectrum(&ctx).map(|_| 0),
        Command::Sweep(_) => commands::cmd_sweep(&ctx).map(|_| 0),
        Command::Occupation(_) => commands::cmd_occupation(&ctx).map(|_| 0),
        Command::StabilityMap(_) => commands::cmd_stability_map(&ctx).map(|_| 0),
        Command::Calibrate(_) => commands::cmd_calibrate(&ctx).map(|_| 0),
        Command::OracleCompare(_) => commands::cmd_oracle_compare(&ctx).map(|r| {
            for row in &r.validation.rows {
                println!(
                    "{:<10} linsolve {:.6e}  tdoracle {:.6e} ± {:.1e}  deviation {:+.3}%  {}",
                    row.observable,
                    row.linsolve,
                    row.tdoracle,
                    row.tdoracle_err,
                    100.0 * row.relative_deviation(),
                    if row.pass { "pass" } else { "FAIL" }
                );
            }
            if r.validation.pass() {
                0
            } else {
                eprintln!("oracle mismatch: {}", r.validation.failures().join(", "));
                EXIT_NUMERICAL
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            if let Error::Unstable { gamma_eff } = e {
                eprintln!(
                    "error: closed loop is unstable (gamma_eff/2pi = {:.4e} Hz); raise the feedback gain or move the probe",
                    optofb_core::units::rad_to_hz(gamma_eff)
                );
            } else {
                eprintln!("error: {e}");
            }
            exit_code(&e)
        }
    }
}
