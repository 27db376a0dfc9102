#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plap_core::field::Quality;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "plap", version, about = "Mean value operators, dynamic programming solves and game simulations for the p-Laplacian")]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; default one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "PLAP_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_parser = parse_quality)]
    quality: Option<Quality>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Closed-form truncated infimum against brute force, plus the error bound.
    Identities,
    /// Expansion ladders for one test field at one point.
    Expand,
    /// Bracketed solve of the dynamic programming equation.
    Solve,
    /// Value estimate of the game from rollouts.
    Game,
    /// Solver error against an exact solution along an epsilon ladder.
    Convergence,
}

fn parse_quality(s: &str) -> Result<Quality, String> {
    s.parse().map_err(|e: plap_core::error::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(q) = cli.quality {
        cfg.quality = q;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let name = match cli.command {
        Command::Identities => "identities",
        Command::Expand => "expand",
        Command::Solve => "solve",
        Command::Game => "game",
        Command::Convergence => "convergence",
    };
    let mut run = commands::Run::new(name, cfg, cli.out);
    let result = match cli.command {
        Command::Identities => commands::identities(&mut run),
        Command::Expand => commands::expand(&mut run),
        Command::Solve => commands::solve(&mut run),
        Command::Game => commands::game(&mut run),
        Command::Convergence => commands::convergence(&mut run),
    };
    // the manifest is written even when a check fails
    match result {
        Err(e @ CliError::Criterion(_)) => {
            run.finish()?;
            Err(e)
        }
        Err(e) => Err(e),
        Ok(()) => run.finish(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
