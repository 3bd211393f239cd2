//! `annulus`: eigen tables, impulse responses, Monte-Carlo runs, comparisons
//! and characteristic-time sweeps for the annular diffusion channel.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "annulus", version, about = "Annular diffusion channel toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: `output.dir`, else the current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Table format (default: `output.format`, else csv).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalue table `m,n,beta,c,norm`.
    Eigen(commands::EigenArgs),
    /// Analytic hitting rate and cumulative absorption.
    Impulse(commands::ImpulseArgs),
    /// Brownian-dynamics run.
    Simulate,
    /// Simulation against the analytic rate on the simulation's bins.
    Compare(commands::CompareArgs),
    /// Peak, average and half times over release radii and aspect ratios.
    Characteristics(commands::CharacteristicsArgs),
}

/// Settings shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub format: Format,
}

fn context(global: &Global) -> Result<Context, CliError> {
    let mut config = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for o in &global.overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = global.seed {
        config.apply_override(&format!("mc.seed={seed}"))?;
    }
    config.validate()?;
    if let Some(n) = global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Parse(format!("--threads: {e}")))?;
    }
    let out = global
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let format = global.format.or(config.output.format).unwrap_or(Format::Csv);
    Ok(Context { config, out, format })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = context(&cli.global)?;
    match cli.command {
        Command::Eigen(args) => commands::eigen(&ctx, &args),
        Command::Impulse(args) => commands::impulse(&ctx, &args),
        Command::Simulate => commands::simulate(&ctx),
        Command::Compare(args) => commands::compare(&ctx, &args),
        Command::Characteristics(args) => commands::characteristics(&ctx, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("annulus: {e}");
            e.exit_code()
        }
    }
}
