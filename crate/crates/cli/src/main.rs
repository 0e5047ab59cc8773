use std::path::PathBuf;
use std::process::ExitCode;

use aaegd_cli::trace_io::summarize_dir;
use aaegd_cli::{output_dir, run_experiment, sweep, CliError, ExperimentConfig, SweepAxis};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aaegd", version, about = "Run and compare AA / AEGD / proximal solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver in a config and write traces plus a summary.
    Run {
        config: PathBuf,
        /// Override a config field, e.g. `--set solver.0.eta=1e-3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory (default: $AAEGD_OUTPUT_ROOT/<name> or runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a config over values of eta, m or q.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `1,3,5,10` or `1/L,2/L`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Only change this solver.
        #[arg(long)]
        solver: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the comparison table for a directory of trace files.
    Summarize {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, overrides, out } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let dir = output_dir(&cfg, out.as_deref());
            let result = run_experiment(&cfg, &dir)?;
            print!("{}", result.summary.to_text());
            println!("wrote {}", result.dir.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            solver,
            overrides,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let dir = output_dir(&cfg, out.as_deref());
            let result = sweep(&cfg, axis, &values, solver.as_deref(), &dir)?;
            for (value, run) in &result.runs {
                println!("== {axis} = {value}");
                print!("{}", run.summary.to_text());
            }
            println!("wrote {}", result.aggregate.display());
        }
        Command::Summarize { dir, json } => {
            let summary = summarize_dir(&dir)?;
            if json {
                println!("{}", summary.to_json());
            } else {
                print!("{}", summary.to_text());
            }
        }
    }
    Ok(())
}
