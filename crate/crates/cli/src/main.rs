//! `ddgate`: design dynamical-decoupling gate sequences and check them
//! against simulated nuclear spin baths.
//!
//! Exit status: 0 success, 1 runtime/IO failure, 2 configuration error,
//! 3 infeasible design or bath selection, 4 dense-engine capacity exceeded,
//! 5 stored design failed re-verification.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::LoadedConfig;
use crate::failure::{CliResult, Failure};
use crate::output::{emit, Format};

#[derive(Parser)]
#[command(name = "ddgate", version, about = "Dynamical-decoupling gate design and spin-bath verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true, env = "DDGATE_OUT")]
    out: Option<PathBuf>,

    /// Top-level seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; overrides the config's `workers`.
    #[arg(long, global = true, env = "DDGATE_WORKERS")]
    workers: Option<usize>,

    /// Summary format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Optimize one gate sequence.
    Design,
    /// Design and evaluate every (gate, pulse count) cell of a grid.
    Sweep,
    /// Generate and select a spin bath, with its free induction decay.
    Bath,
    /// Coherence after repeated runs of a sequence on a stored bath.
    Coherence,
    /// Conditional Bloch trajectory of the target spin.
    Trajectory,
    /// Re-evaluate a stored design and compare bit for bit.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Sweep => "sweep",
            Command::Bath => "bath",
            Command::Coherence => "coherence",
            Command::Trajectory => "trajectory",
            Command::Verify => "verify",
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let cfg = LoadedConfig::load(path)?;
    let workers = cli.workers.or(cfg.config.workers);
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.config.out.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("ddgate-out").join(cli.command.name()));
    let seed = cli.seed.unwrap_or(cfg.config.seed);
    let ctx = Context { cfg, out, seed };
    let records = match cli.command {
        Command::Design => commands::design(&ctx)?,
        Command::Sweep => commands::sweep(&ctx)?,
        Command::Bath => commands::bath(&ctx)?,
        Command::Coherence => commands::coherence(&ctx)?,
        Command::Trajectory => commands::trajectory(&ctx)?,
        Command::Verify => commands::verify(&ctx)?,
    };
    emit(cli.format, &records);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ddgate {}: {f}", cli.command.name());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
