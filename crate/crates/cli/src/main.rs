use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use seqdetect::{run, write_report, Command, ExperimentConfig, Overrides};
use seqdetect_core::exec::with_threads;

#[derive(Parser)]
#[command(name = "seqdetect", version, about = "Minimax signal detection experiments in the sequence model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides run.output_path.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Overrides rng.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replications and grid evaluation.
    #[arg(long, global = true, env = "SEQDETECT_THREADS")]
    threads: Option<usize>,

    /// Overrides run.reps.
    #[arg(long, global = true)]
    reps: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Upper, lower and classical separation radii over the eps grid.
    Bounds,
    /// Test constants, C_beta in both modes, thresholds.
    Calibrate,
    /// Monte Carlo type I / type II error rates.
    Simulate,
    /// Rate exponents for the benchmark cells.
    Rates,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Bounds => Command::Bounds,
            Cmd::Calibrate => Command::Calibrate,
            Cmd::Simulate => Command::Simulate,
            Cmd::Rates => Command::Rates,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("seqdetect: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("seqdetect: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let command = Command::from(cli.command);
    let path = cli.config.as_ref().ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let config = ExperimentConfig::load(path)?;
    let exp = config.resolve(command, Overrides { seed: cli.seed, reps: cli.reps })?;
    let report = with_threads(cli.threads, || run(command, &exp))?;
    let dir = cli.output.clone().or_else(|| exp.output_path.clone()).unwrap_or_else(|| PathBuf::from("."));
    write_report(&report, &dir)?;
    for file in &report.files {
        println!("wrote {}", dir.join(&file.name).display());
    }
    Ok(report.passed)
}
