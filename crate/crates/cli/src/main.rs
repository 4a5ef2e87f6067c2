use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stackdenoise_cli::commands::{baseline, denoise, evaluate, noise, phantom, similarity, train};

/// Denoise image stacks by learning from neighboring planes.
#[derive(Debug, Parser)]
#[command(name = "stackdenoise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Noise(noise::NoiseArgs),
    Train(train::TrainArgs),
    Denoise(denoise::DenoiseArgs),
    Evaluate(evaluate::EvaluateArgs),
    Baseline(baseline::BaselineArgs),
    NeighborSsim(similarity::NeighborSsimArgs),
    Phantom(phantom::PhantomArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Noise(a) => noise::run(a),
        Command::Train(a) => train::run(a),
        Command::Denoise(a) => denoise::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Baseline(a) => baseline::run(a),
        Command::NeighborSsim(a) => similarity::run(a),
        Command::Phantom(a) => phantom::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
