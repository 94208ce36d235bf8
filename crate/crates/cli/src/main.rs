//! `trajkit`: evaluate, validate, upsample, generate, train and gradcheck.
//!
//! Exit codes: 0 success, 1 validation failures found, 2 usage or input errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{Outcome, Run};
use config::{ReportFormat, RunConfig, ValidateKind};

#[derive(Debug, Parser)]
#[command(name = "trajkit", version, about = "Trajectory scoring and GRPO toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Strict JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    scenarios: Option<PathBuf>,
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
    /// Input file for validate and upsample.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file (a directory for train); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    report: Option<ReportFormat>,
    /// File kind for validate: annotation, cot-stage1..cot-stage4, trajectory, scenarios.
    #[arg(long, global = true)]
    kind: Option<ValidateKind>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Score predictions against rated scenarios and write the RFS report.
    Evaluate,
    /// Check every line of a file against a grammar or schema.
    Validate,
    /// Spline-upsample 1 Hz waypoint predictions to 4 Hz.
    Upsample,
    /// Write a synthetic scenario dataset.
    Generate,
    /// Run GRPO on a scenario dataset.
    Train,
    /// Compare the analytic GRPO gradient with central differences.
    Gradcheck,
}

fn build(cli: Cli) -> Result<(Command, Run)> {
    let config = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let mut cfg = RunConfig::load(&config)?;
    if let Some(s) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(s);
    }
    cfg.validate()?;
    let run = Run {
        scenarios: cli.scenarios.or_else(|| cfg.scenarios.clone()),
        predictions: cli.predictions.or_else(|| cfg.predictions.clone()),
        input: cli.input.or_else(|| cfg.input.clone()),
        out: cli.out.or_else(|| cfg.out.clone()),
        report: cli.report.unwrap_or(cfg.report),
        kind: cli.kind.or(cfg.validate.kind),
        cfg,
    };
    Ok((cli.command, run))
}

fn run(cli: Cli) -> Result<Outcome> {
    let (command, run) = build(cli)?;
    match command {
        Command::Evaluate => commands::evaluate(&run),
        Command::Validate => commands::validate(&run),
        Command::Upsample => commands::upsample(&run),
        Command::Generate => commands::generate(&run),
        Command::Train => commands::train_cmd(&run),
        Command::Gradcheck => commands::gradcheck(&run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failures) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
