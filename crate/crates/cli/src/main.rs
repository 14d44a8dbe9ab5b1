//! `ssl-har`: synthesize data, train, evaluate, cross-validate, sweep
//! reconstruction weights, gradient-check and export PCA features.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "ssl-har", version, about = "Semi-supervised CNN / encoder-decoder / ladder networks for activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by config-driven subcommands; they override config keys.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides; values are parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(out) = &self.out {
            o.push(format!("out={}", serde_json::Value::String(out.display().to_string())));
        }
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        o
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-subject accelerometer corpus as CSV.
    Synth {
        #[arg(long, default_value_t = 6)]
        subjects: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        /// Sampling rate in Hz.
        #[arg(long, default_value_t = 20.0)]
        rate: f64,
        /// Seconds of each activity per subject.
        #[arg(long, default_value_t = 120.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one method on every subject except `holdout_subject` and save it.
    Train(RunArgs),
    /// Score a saved network on a corpus CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Window overlap used to segment the corpus.
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-subject-out cross-validation.
    Loso(RunArgs),
    /// One ladder cross-validation per emphasized reconstruction level.
    SweepLambda(RunArgs),
    /// Finite-difference check of every model family's gradients.
    Gradcheck(commands::GradcheckArgs),
    /// Project last-layer features onto their top two principal components.
    VizPca {
        #[command(flatten)]
        run: RunArgs,
        /// Network produced by `train` with the same config.
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { subjects, classes, rate, seconds, seed, out } => {
            commands::synth(subjects, classes, rate, seconds, seed, &out)
        }
        Command::Train(a) => commands::train(&a),
        Command::Eval { checkpoint, data, overlap, out } => commands::eval(&checkpoint, &data, overlap, &out),
        Command::Loso(a) => commands::loso(&a),
        Command::SweepLambda(a) => commands::sweep_lambda(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::VizPca { run, checkpoint } => commands::viz_pca(&run, &checkpoint),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.downcast_ref::<ConfigError>().is_some() { 2 } else { 1 };
            let line: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", line.join(": ").replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
