//! `annostat` command line.

mod commands;
mod config;
mod demo;

use std::path::PathBuf;
use std::process::ExitCode;

use annostat::{Error, ErrorKind};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "annostat", version, about = "Machine-assisted annotation with error-aware statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw input into a corpus JSONL file.
    Ingest(ConfigArg),
    /// Label every unit of the corpus.
    Annotate(ConfigArg),
    /// Score annotations against gold labels.
    Evaluate(ConfigArg),
    /// Confidence intervals from the confusion-matrix bootstrap.
    Bootstrap(ConfigArg),
    /// Fit a logistic or mixed logistic model.
    Fit(ConfigArg),
    /// Combine evaluation and bootstrap outputs.
    Report(ConfigArg),
    /// Run a synthetic model-comparison demonstration.
    Demo {
        #[arg(value_enum)]
        kind: demo::DemoKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the generated data as corpus JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ConfigArg {
    #[arg(short, long)]
    config: PathBuf,
}

fn exit_code(error: &Error) -> u8 {
    match error.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Transport => 4,
    }
}

fn run(cli: Cli) -> annostat::Result<()> {
    let with_config = |arg: &ConfigArg, f: fn(&RunConfig) -> annostat::Result<()>| f(&RunConfig::load(&arg.config)?);
    match &cli.command {
        Command::Ingest(a) => with_config(a, commands::ingest),
        Command::Annotate(a) => with_config(a, commands::annotate),
        Command::Evaluate(a) => with_config(a, commands::evaluate),
        Command::Bootstrap(a) => with_config(a, commands::bootstrap),
        Command::Fit(a) => with_config(a, commands::fit),
        Command::Report(a) => with_config(a, commands::report),
        Command::Demo { kind, seed, out } => demo::run(*kind, *seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
