use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cli;

#[derive(Parser, Debug)]
#[command(name = "stablecond", version, about = "Conditioned isotropic stable processes: simulate, tabulate, verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate free or conditioned paths and write the ensemble.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate a harmonic function or density on a radial grid as CSV.
    Tabulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment and write its report.
    Verify {
        /// Experiment config (JSON, tagged by "experiment").
        #[arg(long, conflicts_with = "experiment")]
        config: Option<PathBuf>,
        /// Run the named experiment with its default config.
        #[arg(required_unless_present = "config")]
        experiment: Option<String>,
    },
    /// Re-run a report from its embedded config and compare.
    Replay {
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate { config } => cli::simulate::run(config, &cli.out, cli.seed),
        Command::Tabulate { config } => cli::tabulate::run(config, &cli.out),
        Command::Verify { config, experiment } => cli::verify::run(config.as_deref(), experiment.as_deref(), &cli.out, cli.seed),
        Command::Replay { report } => cli::verify::replay(report, &cli.out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
