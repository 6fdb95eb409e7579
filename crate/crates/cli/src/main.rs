//! `palsy`: preprocessing, featurization, evaluation, tuning and scaling
//! runs over facial landmark cohorts.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunArgs, ScaleOpts, SynthOpts, TuneOpts};

#[derive(Parser)]
#[command(name = "palsy", version, about = "Facial palsy triage from 68-point facial landmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic cohort.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        opts: SynthOpts,
    },
    /// Normalize a raw cohort and report exclusions.
    Preprocess {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write feature matrices for one or all views.
    Featurize {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Leave-one-out evaluation of one model on one view.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Leave-one-out accuracy across a hyperparameter range.
    Tune {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        opts: TuneOpts,
    },
    /// Shrink the cohort, track performance by size and extrapolate.
    Scale {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        opts: ScaleOpts,
    },
    /// Fit a model on the whole input and save it.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Label an input with a saved model.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        /// Model file written by `train`.
        #[arg(long)]
        model_file: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth { run, opts } => commands::synth(run, opts),
        Command::Preprocess { run } => commands::preprocess(run),
        Command::Featurize { run } => commands::featurize(run),
        Command::Evaluate { run } => commands::evaluate(run),
        Command::Tune { run, opts } => commands::tune(run, opts),
        Command::Scale { run, opts } => commands::scale(run, opts),
        Command::Train { run } => commands::train(run),
        Command::Predict { run, model_file } => commands::predict(run, &model_file),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
