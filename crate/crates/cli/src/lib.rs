//! Command-line driver: synthesize corpora, pretrain, fine-tune, fit
//! baselines, evaluate checkpoints and build correlation reports.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, SweepAxis};

#[derive(Debug, Parser)]
#[command(
    name = "glass",
    version,
    about = "Self-supervised gaze forecasting and emotion heads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus: OpenFace CSVs, annotations and a manifest.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain a forecaster, optionally sweeping one axis.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// model_size, input_seconds or output_seconds.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Train emotion heads on a pretrained encoder, one split per seed.
    Finetune {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the statistical and CNN baselines.
    Baseline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast correlation of a checkpoint on the validation split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate pretraining and downstream metrics across configurations.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        pretrain: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        downstream: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(command: Command) -> glass::Result<()> {
    match command {
        Command::Synth { config, out } => commands::synth(&RunConfig::load(config.as_deref())?, &out),
        Command::Pretrain { config, out, sweep } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let axis = sweep.as_deref().map(SweepAxis::parse).transpose()?;
            commands::pretrain(&cfg, &out, axis)
        }
        Command::Finetune {
            config,
            checkpoint,
            out,
        } => commands::finetune(&RunConfig::load(config.as_deref())?, &checkpoint, &out),
        Command::Baseline { config, out } => commands::baseline(&RunConfig::load(config.as_deref())?, &out),
        Command::Eval {
            config,
            checkpoint,
            out,
        } => commands::eval(&RunConfig::load(config.as_deref())?, &checkpoint, &out),
        Command::Report {
            pretrain,
            downstream,
            out,
        } => commands::report(&pretrain, &downstream, &out),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code:
/// 0 on success, 1 for configuration or runtime errors, 2 for usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
