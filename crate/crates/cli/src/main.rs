//! `wellcast`: simulate, preprocess, augment, train, predict, and evaluate
//! microwell fluorescence videos from one entry point.
//!
//! Every subcommand writes a resolved-config JSON next to its outputs so a
//! run can be reproduced exactly. Verbosity comes from the `WELLCAST_LOG`
//! environment variable (`error`, `info`, `debug`, ...).

mod commands;
mod pipeline;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "wellcast", version, about = "Microwell video prediction toolkit")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Outputs are
    /// byte-identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Generate a synthetic raw corpus of two-species microwell videos.
    Simulate(commands::SimulateArgs),
    /// Center, trim, and expand raw wells to the training geometry.
    Preprocess(commands::PreprocessArgs),
    /// Expand wells with spatial transforms and assign train/valid/test splits.
    Augment(commands::AugmentArgs),
    /// Train the video predictor on a prepared manifest.
    Train(commands::TrainArgs),
    /// Predict the future frames of a conditioning video.
    Predict(commands::PredictArgs),
    /// Compare predicted frames against groundtruth.
    Eval(commands::EvalArgs),
    /// Run simulate -> preprocess -> augment -> train -> predict -> eval.
    Pipeline(pipeline::PipelineArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter("WELLCAST_LOG")).init();
    if let Some(workers) = cli.workers {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()
        {
            eprintln!("error in stage setup: {e}");
            return ExitCode::from(1);
        }
    }

    let (stage, result) = match &cli.command {
        Command::Simulate(args) => ("simulate", commands::run_simulate(args)),
        Command::Preprocess(args) => ("preprocess", commands::run_preprocess(args)),
        Command::Augment(args) => ("augment", commands::run_augment(args)),
        Command::Train(args) => ("train", commands::run_train(args)),
        Command::Predict(args) => ("predict", commands::run_predict(args)),
        Command::Eval(args) => ("eval", commands::run_eval(args)),
        Command::Pipeline(args) => ("pipeline", pipeline::run_pipeline(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error in stage {stage}: {e}");
            ExitCode::from(1)
        }
    }
}
