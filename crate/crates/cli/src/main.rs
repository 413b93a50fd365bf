use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod svg;

use config::ExperimentConfig;
use rps_kinetic::Error;

/// Solver, asymptotics and Monte Carlo driver for the kinetic
/// rock-paper-scissors wealth-exchange model.
#[derive(Parser, Debug)]
#[command(name = "rpsk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the nonlinear solver and write the decay trajectory.
    Simulate(RunArgs),
    /// Write the large-time limit of the initial measure.
    Limit(RunArgs),
    /// Tabulate the decay constants over a grid of evaluation times.
    Harris(RunArgs),
    /// Compare agent-based runs with the mean-field solution.
    Mc(RunArgs),
    /// Flat norm of a measure and of its projection gap.
    Flatnorm(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: bool,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `mc.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of agents (overrides `mc.n`).
    #[arg(long)]
    n: Option<usize>,
    /// Number of replicates (overrides `mc.replicates`).
    #[arg(long)]
    replicates: Option<usize>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical { .. } | Error::NoCertificate(_) => 2,
        _ => 1,
    }
}

fn load(args: &RunArgs) -> rps_kinetic::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.outputs = out.clone();
        cfg.note_override("outputs.dir", out.display().to_string());
    }
    if let Some(seed) = args.seed {
        cfg.mc_seed = seed;
        cfg.note_override("mc.seed", seed.to_string());
    }
    if let Some(n) = args.n {
        cfg.mc_n = n;
        cfg.note_override("mc.n", n.to_string());
    }
    if let Some(r) = args.replicates {
        cfg.mc_replicates = r;
        cfg.note_override("mc.replicates", r.to_string());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> rps_kinetic::Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&load(&a)?, a.svg),
        Command::Limit(a) => commands::limit(&load(&a)?),
        Command::Harris(a) => commands::harris(&load(&a)?),
        Command::Mc(a) => commands::mc(&load(&a)?),
        Command::Flatnorm(a) => commands::flatnorm(&load(&a)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpsk: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
