use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use setbp_cli::error::{CliError, Result};
use setbp_cli::experiment::ExperimentConfig;
use setbp_cli::{dataset, evaluate, oracle, runner, sweep_dir, sweep_one, thread_pool};

#[derive(Parser)]
#[command(name = "setbp", version, about = "Set-type BP SLAM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset file per trial.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one filter variant over a dataset.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute RMSE and GOSPA tables from result directories.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the steady-state start recorded in the dataset.
        #[arg(long)]
        steady_after: Option<usize>,
    },
    /// Simulate, run every variant and evaluate, for each config.
    Sweep {
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle self-checks.
    OracleTest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<()> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::Simulate { config, out } => {
            let experiment = ExperimentConfig::load(&config)?;
            dataset::simulate(&experiment, &out)
        }
        Command::Run {
            dataset,
            config,
            variant,
            out,
        } => {
            let experiment = ExperimentConfig::load(&config)?;
            runner::run(&dataset, experiment.variant(&variant)?, &out)
        }
        Command::Eval {
            results,
            truth,
            out,
            steady_after,
        } => {
            let eval = evaluate::evaluate(&results, &truth, steady_after)?;
            evaluate::write_evaluation(&eval, &out)
        }
        Command::Sweep { config, out } => {
            for path in &config {
                let experiment = ExperimentConfig::load(path)?;
                sweep_one(&experiment, &sweep_dir(&out, path, config.len()))?;
            }
            Ok(())
        }
        Command::OracleTest { seed } => {
            let outcomes = oracle::all_checks(seed)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(failed.join(", ")))
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
