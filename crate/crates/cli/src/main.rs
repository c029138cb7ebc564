mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use crate::commands::CliError;

/// Rubric-informed scoring of performance recordings: synthetic data,
/// training, evaluation and score-sheet reports.
#[derive(Debug, Parser)]
#[command(name = "iris", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Html,
}

/// Optional seeded train/test partition of a dataset directory.
#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Split the dataset and use only this many records for training;
    /// evaluation-type commands then use the remaining records.
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Seed of the train/test partition.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its manifest.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Embedding dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Per-feature noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train a model and write it with its per-epoch loss log.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Loss log CSV; defaults to the model path with a `.log.csv` extension.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Score a model, or a predictions file, against labelled records.
    Evaluate {
        #[arg(long, conflicts_with = "predictions")]
        model: Option<PathBuf>,
        /// Predictions JSON as written by `predict`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fail unless the model or predictions have this variant.
        #[arg(long)]
        variant: Option<String>,
        /// Metrics CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Run a model on records and write the predictions as JSON.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Only this record.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Render the predicted score sheet of one record.
    Report {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        format: Option<ReportFormat>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every model variant on one split.
    Ablation {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Table CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        split: SplitArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate {
            n,
            seed,
            out,
            dim,
            noise,
        } => {
            let out = config::required(out.or(cfg.out.clone()), "--out")?;
            commands::generate(&cfg, n, seed, dim, noise, &out)
        }
        Command::Train {
            data,
            variant,
            out,
            log,
            epochs,
            seed,
            learning_rate,
            batch_size,
            split,
        } => {
            let mut train = cfg.train.clone();
            if let Some(v) = variant.or(cfg.variant.clone()) {
                train.variant = config::variant(&v)?;
            }
            if let Some(e) = epochs {
                train.max_epochs = e;
            }
            if let Some(s) = seed {
                train.seed = s;
            }
            if let Some(lr) = learning_rate {
                train.learning_rate = lr;
            }
            if let Some(b) = batch_size {
                train.batch_size = b;
            }
            let data = config::existing_dir(data.or(cfg.data.clone()), "--data")?;
            let out = config::required(out.or(cfg.out.clone()), "--out")?;
            let log = log
                .or(cfg.log.clone())
                .unwrap_or_else(|| out.with_extension("log.csv"));
            commands::train(&data, &out, &log, &train, &cfg.split(&split))
        }
        Command::Evaluate {
            model,
            predictions,
            data,
            variant,
            out,
            split,
        } => {
            let data = config::existing_dir(data.or(cfg.data.clone()), "--data")?;
            let expected = variant
                .or(cfg.variant.clone())
                .map(|v| config::variant(&v))
                .transpose()?;
            let source = match (
                predictions.or(cfg.predictions.clone()),
                model.or(cfg.model.clone()),
            ) {
                (Some(p), _) => commands::Source::Predictions(config::existing_file(p)?),
                (None, Some(m)) => commands::Source::Model(config::existing_file(m)?),
                (None, None) => {
                    return Err(CliError::Validation(
                        "one of --model or --predictions is required".into(),
                    ))
                }
            };
            commands::evaluate(
                &data,
                source,
                expected,
                out.or(cfg.out.clone()).as_deref(),
                &cfg.split(&split),
            )
        }
        Command::Predict {
            model,
            data,
            id,
            out,
            split,
        } => {
            let model =
                config::existing_file(config::required(model.or(cfg.model.clone()), "--model")?)?;
            let data = config::existing_dir(data.or(cfg.data.clone()), "--data")?;
            let out = config::required(out.or(cfg.out.clone()), "--out")?;
            commands::predict(&model, &data, id.as_deref(), &out, &cfg.split(&split))
        }
        Command::Report {
            model,
            data,
            id,
            format,
            out,
        } => {
            let model =
                config::existing_file(config::required(model.or(cfg.model.clone()), "--model")?)?;
            let data = config::existing_dir(data.or(cfg.data.clone()), "--data")?;
            let format = format.or(cfg.format).unwrap_or(ReportFormat::Text);
            commands::report(
                &model,
                &data,
                &id,
                format,
                out.or(cfg.out.clone()).as_deref(),
            )
        }
        Command::Ablation {
            data,
            out,
            epochs,
            seed,
            split,
        } => {
            let mut train = cfg.train.clone();
            if let Some(e) = epochs {
                train.max_epochs = e;
            }
            if let Some(s) = seed {
                train.seed = s;
            }
            let data = config::existing_dir(data.or(cfg.data.clone()), "--data")?;
            let mut split = cfg.split(&split);
            split
                .train_count
                .get_or_insert(iris::data::DEFAULT_TRAIN_COUNT);
            commands::ablation(&data, out.or(cfg.out.clone()).as_deref(), &train, &split)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
