//! `primcloud` — batch front end for the generator and distillation
//! pipeline. Subcommands: generate, export, featurize, distill, stats,
//! validate, bench.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Every flag can
//! also be supplied from a `key = value` config file via `--config`;
//! command-line values win.

mod cmd;
mod config;
mod error;
mod parse;

use clap::{Parser, Subcommand};
use error::CliError;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "primcloud", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled point-cloud dataset from random constructive trees
    Generate(cmd::generate::Args),
    /// Export dataset records as PLY files
    Export(cmd::export::Args),
    /// Extract descriptor features from a dataset into a feature file
    Featurize(cmd::featurize::Args),
    /// Prune a source set toward a target by MMD data adaptivity
    Distill(cmd::distill::Args),
    /// Summarize a dataset (histograms, label frequencies, ACD diversity)
    Stats(cmd::stats::Args),
    /// Re-run generator invariants over a dataset file
    Validate(cmd::validate::Args),
    /// Time generation by leaf count and adaptivity scaling, emitting CSV
    Bench(cmd::bench::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd::generate::run(args),
        Command::Export(args) => cmd::export::run(args),
        Command::Featurize(args) => cmd::featurize::run(args),
        Command::Distill(args) => cmd::distill::run(args),
        Command::Stats(args) => cmd::stats::run(args),
        Command::Validate(args) => cmd::validate::run(args),
        Command::Bench(args) => cmd::bench::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
