//! Batch driver for `kirchhoff-core`.
//!
//! ```text
//! kirchhoff <ground|signchanging|verify|kernel-sum> [--config PATH] [--out DIR] [--seed N] [--set key=value]...
//! ```
//!
//! Exit codes: 0 success, 1 config error, 2 non-convergence, 3 verification
//! failure. `KIRCHHOFF_THREADS` sets the size of the worker pool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{ConfigError, Purpose, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    ConfigError = 1,
    NotConverged = 2,
    VerificationFailed = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] kirchhoff_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn status(&self) -> Status {
        use kirchhoff_core::Error as E;
        match self {
            CliError::Core(E::Numerical(_) | E::SignLoss { .. }) => Status::NotConverged,
            _ => Status::ConfigError,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kirchhoff",
    version,
    about = "Ground states and sign-changing solutions of a lattice fractional Kirchhoff equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ground state by Nehari-constrained descent.
    Ground,
    /// Sign-changing solution by descent on the sign-changing Nehari set.
    Signchanging,
    /// Property battery; writes verify.csv.
    Verify,
    /// Partial sums and tail bounds of the lattice kernel sum.
    KernelSum,
}

impl Command {
    fn purpose(self) -> Purpose {
        match self {
            Command::Ground => Purpose::Ground,
            Command::Signchanging => Purpose::SignChanging,
            Command::Verify => Purpose::Verify,
            Command::KernelSum => Purpose::KernelSum,
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("KIRCHHOFF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::Invalid(format!("KIRCHHOFF_THREADS = `{raw}` is not a positive integer")))?;
    // the global pool can only be set once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<Status, CliError> {
    configure_threads()?;
    let cfg = load_config(cli)?;
    cfg.validate(cli.command.purpose())?;
    output::write_config(&cli.out, &cfg)?;
    if cli.command == Command::KernelSum {
        return commands::cmd_kernel_sum(&cfg, &cli.out);
    }
    let problem = cfg.problem()?;
    match cli.command {
        Command::Ground => commands::cmd_ground(&cfg, &problem, &cli.out),
        Command::Signchanging => commands::cmd_signchanging(&cfg, &problem, &cli.out),
        Command::Verify => commands::cmd_verify(&cfg, &problem, &cli.out),
        Command::KernelSum => unreachable!(),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Status::ConfigError as i32
            } else {
                Status::Ok as i32
            };
        }
    };
    match execute(&cli) {
        Ok(status) => status as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.status() as i32
        }
    }
}
