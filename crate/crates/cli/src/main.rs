//! `hashee` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "hashee",
    version,
    about = "Hash-routed token-level early exiting"
)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a token-to-exit-layer hash table.
    BuildHash(commands::build_hash::Args),
    /// Run the exit-aware encoder over a corpus.
    Infer(commands::infer::Args),
    /// Account the FLOPs of a hash table over a corpus.
    FlopsReport(commands::flops::Args),
    /// Compare consistent and inconsistent random hashing.
    AblateConsistency(commands::ablate::Args),
    /// Annotate, oversample and predict model-defined difficulty.
    Difficulty(commands::difficulty::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    let result = match cli.command {
        Command::BuildHash(a) => commands::build_hash::run(&ctx, &a),
        Command::Infer(a) => commands::infer::run(&ctx, &a),
        Command::FlopsReport(a) => commands::flops::run(&ctx, &a),
        Command::AblateConsistency(a) => commands::ablate::run(&ctx, &a),
        Command::Difficulty(a) => commands::difficulty::run(&ctx, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
