use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use har_cli::commands::{self, DEFAULT_RUNS_DIR};
use har_cli::{CliError, Options};
use har_core::eval::{format_percent, render_metrics};
use tracing_subscriber::EnvFilter;

/// Activity recognition from object-usage sequences with prompted language models.
#[derive(Parser)]
#[command(name = "har", version, about)]
struct Cli {
    /// TOML file with defaults for any flag (keys are the flag names).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check a dataset; prints violations one per line.
    Validate(Options),
    /// Build the knowledge artifact (confusable pairs and their descriptions).
    Knowledge(Options),
    /// Classify every episode and write a predictions file.
    Classify(Options),
    /// Score predictions files: metrics, confusion matrix, comparison table.
    Eval(Options),
    /// Everything above in a new timestamped run directory.
    Run(Options),
}

impl Command {
    fn options(&self) -> &Options {
        match self {
            Command::Validate(o) | Command::Knowledge(o) | Command::Classify(o) | Command::Eval(o) | Command::Run(o) => o,
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("HAR_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let opts = Options::resolve(cli.command.options().clone(), cli.config.as_deref())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(format!("cannot start runtime: {e}")))?;

    match &cli.command {
        Command::Validate(_) => {
            let ds = commands::cmd_validate(&opts)?;
            println!(
                "{}: ok ({} episodes, {} activities, {} objects)",
                ds.name,
                ds.episodes.len(),
                ds.activities.len(),
                ds.vocabulary.len()
            );
        }
        Command::Knowledge(_) => {
            let backend = commands::with_cache(commands::open_backend(&opts)?, &opts, &opts.out_dir("."))?;
            let outcome = runtime.block_on(commands::cmd_knowledge(&opts, backend.as_ref()))?;
            for pair in &outcome.artifact.pairs {
                println!("{pair}");
            }
            for failure in &outcome.artifact.description_failures {
                println!("warning: no description for {} ({})", failure.missing.join(", "), failure.pair);
            }
            println!("wrote {}", outcome.path.display());
        }
        Command::Classify(_) => {
            let backend = commands::with_cache(commands::open_backend(&opts)?, &opts, &opts.out_dir("."))?;
            let outcome = runtime.block_on(commands::cmd_classify(&opts, backend.as_ref()))?;
            let scored = outcome.record.scored_episodes();
            let count = |f: fn(&har_core::eval::Outcome) -> bool| scored.iter().filter(|s| f(&s.outcome)).count();
            println!(
                "predicted={} abstained={} failed={}",
                count(|o| matches!(o, har_core::eval::Outcome::Predicted(_))),
                count(|o| matches!(o, har_core::eval::Outcome::Abstain)),
                count(|o| matches!(o, har_core::eval::Outcome::Failed)),
            );
            println!("wrote {}", outcome.predictions_path.display());
        }
        Command::Eval(_) => {
            let outcome = commands::cmd_eval(&opts)?;
            for e in &outcome.evaluations {
                print!("{}", render_metrics(&e.label, &e.metrics));
            }
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
        }
        Command::Run(_) => {
            let backend = commands::with_cache(commands::open_backend(&opts)?, &opts, &opts.out_dir(DEFAULT_RUNS_DIR))?;
            let outcome = runtime.block_on(commands::cmd_run(&opts, backend.as_ref()))?;
            let (num, den) = outcome.evaluation.metrics.f1_ratio();
            println!("micro_f1: {}", format_percent(num, den));
            println!("run directory: {}", outcome.run_dir.display());
        }
    }
    Ok(())
}
