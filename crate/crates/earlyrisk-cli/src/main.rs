//! Batch pipeline driver: CSV in, rule/vote/metric/plot artifacts out.

mod artifacts;
mod config;
mod registry;
mod report;
mod stages;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;
use stages::StageError;

#[derive(Parser)]
#[command(
    name = "earlyrisk",
    version,
    about = "End-to-end early-diabetes risk pipeline: encoding, rule mining, \
             feature voting, eleven classifiers, and report artifacts."
)]
struct Cli {
    /// JSON config file; omitted fields fall back to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Input CSV, overriding the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated model keys, overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the manifest.
    Run,
    /// Encode the raw CSV into `encoded.csv`.
    Ingest,
    /// Mine association rules into `rules.csv`.
    Mine,
    /// Vote features across the six selectors into `votes.csv`.
    Select,
    /// Split, fit every enabled model, and checkpoint the network.
    Train,
    /// Cross-validate every enabled model into `cv.csv`.
    Cv,
    /// Score the held-out split into metric and ROC tables.
    Eval,
    /// Render `report.md` and `roc.svg` from existing tables.
    Report,
}

fn run(cli: &Cli) -> Result<(), StageError> {
    let overrides = Overrides {
        data: cli.data.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        models: cli.models.clone(),
    };
    let config = config::resolve(cli.config.as_deref(), &overrides)
        .map_err(|message| StageError {
            stage: "config",
            message,
        })?;
    match cli.command {
        Command::Run => stages::run_all(&config),
        Command::Ingest => stages::stage_ingest(&config),
        Command::Mine => stages::stage_mine(&config),
        Command::Select => stages::stage_select(&config),
        Command::Train => stages::stage_train(&config),
        Command::Cv => stages::stage_cv(&config),
        Command::Eval => stages::stage_eval(&config),
        Command::Report => stages::stage_report(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
