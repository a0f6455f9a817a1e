//! `quantlap`: spectra, balancing runs and asymptotic fits from a config file.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical or convergence
//! failure, 4 failed assertion (only with `--assert`), 1 i/o.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::CmdError;
use config::{ConfigError, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "quantlap", version, about = "Quantized Laplacian experiments on CP^1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fixed-order reductions and no timings, for byte-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Exit with status 4 if any check fails.
    #[arg(long = "assert", global = true)]
    assert_checks: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Eigenvalues of P*P per degree, matched against the configured oracle.
    Spectrum,
    /// Balancing iteration logs per degree.
    Balance,
    /// Inverse-power fits of the Hessian, Bergman and Toeplitz kernels.
    Asymptotics,
    /// Summary table of the JSON reports in the output directory.
    Report,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.deterministic |= cli.deterministic;
    cfg.validate()?;
    Ok(cfg)
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    let msg = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail("config", 2, &e.to_string()),
    };
    let result = match cli.command {
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Balance => commands::balance(&cfg),
        Command::Asymptotics => commands::asymptotics(&cfg),
        Command::Report => commands::report(&cfg),
    };
    match result {
        Ok(failures) => {
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            if cli.assert_checks && !failures.is_empty() {
                return fail("assertion", 4, &format!("{} check(s) failed", failures.len()));
            }
            ExitCode::SUCCESS
        }
        Err(CmdError::Config(e)) => fail("config", 2, &e.to_string()),
        Err(e @ (CmdError::Numeric { .. } | CmdError::NonConvergence(_))) => fail("numeric", 3, &e.to_string()),
        Err(e @ CmdError::Io(_)) => fail("io", 1, &e.to_string()),
    }
}
