//! `lexmatch` binary: synthetic data, training, evaluation,
//! decomposition export, missing-article discovery, gradient checks,
//! and grid experiments, with reproducibility manifests throughout.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use lexmatch_core::Error;

#[derive(Parser)]
#[command(
    name = "lexmatch",
    version,
    about = "Causal decomposition of case embeddings with law-article instruments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a planted causal structure.
    Synth(commands::synth::SynthArgs),
    /// Train the decomposition and matching model.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on labelled pairs.
    Eval(commands::eval::EvalArgs),
    /// Export per-case decompositions under a checkpoint.
    Decompose(commands::decompose::DecomposeArgs),
    /// Build a sentence-article graph and infer article lists.
    Discover(commands::discover::DiscoverArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
    /// Run a train/eval grid over modes, sources, noise, and seeds.
    Experiment(commands::experiment::ExperimentArgs),
}

/// Exit codes are a stable scripting contract: 0 success, 2 input or
/// configuration error, 3 numeric failure.
fn code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Decompose(args) => commands::decompose::run(args),
        Command::Discover(args) => commands::discover::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Experiment(args) => commands::experiment::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(code_for(&err));
        }
    }
}
