//! `nmgle` command-line driver.
//!
//! Exit status: 0 success, 2 configuration error, 3 numerical divergence,
//! 4 I/O error, 1 anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nmgle", version, about = "Charged particle coupled to field modes: dynamics, memory and diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write series, summary and plots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the local and reduced quadrupole forms on matched inputs.
    CompareFormulations {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean-square displacement, direct and from the velocity correlation.
    Msd {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the memory kernel and its memory metric.
    Kernel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Time naive against incremental history convolution.
    BenchConvolution {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        steps: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the effective configuration.
    EchoConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, out } => commands::simulate(config, out),
        Command::CompareFormulations { config, out } => commands::compare_formulations(config, out),
        Command::Msd { config, out } => commands::msd(config, out),
        Command::Kernel { config, out, points } => commands::kernel(config, out, *points),
        Command::BenchConvolution { steps, out, seed } => commands::bench(steps, out, *seed),
        Command::EchoConfig { config } => commands::echo_config(config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nmgle: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
