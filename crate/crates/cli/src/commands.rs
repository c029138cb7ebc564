use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use iris::data::{self, DataError, Manifest, PerformanceRecord};
use iris::pipeline::{self, ModelVariant, PipelineError, Prediction, TrainConfig, TrainingLog};
use iris::report;
use thiserror::Error;

use crate::config::{RunConfig, Split};
use crate::ReportFormat;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// 1 validation, 2 I/O, 3 numerical divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Data(e) => data_code(e),
            CliError::Pipeline(e) => match e {
                PipelineError::Divergence { .. } => 3,
                PipelineError::Io { .. } => 2,
                PipelineError::Data(e) => data_code(e),
                _ => 1,
            },
        }
    }
}

fn data_code(e: &DataError) -> u8 {
    match e {
        DataError::Io { .. } => 2,
        _ => 1,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn load(dir: &Path) -> Result<Vec<PerformanceRecord>, CliError> {
    let records = data::load_dataset(dir)?;
    if records.is_empty() {
        return Err(CliError::Validation(format!(
            "no records in {}",
            dir.display()
        )));
    }
    Ok(records)
}

/// Training part of the dataset, or everything when no split is requested.
fn training_records(dir: &Path, split: &Split) -> Result<Vec<PerformanceRecord>, CliError> {
    let records = load(dir)?;
    match split.train_count {
        Some(n) => Ok(data::split(records, n, split.seed)?.0),
        None => Ok(records),
    }
}

/// Held-out part of the dataset, or everything when no split is requested.
fn test_records(dir: &Path, split: &Split) -> Result<Vec<PerformanceRecord>, CliError> {
    let records = load(dir)?;
    match split.train_count {
        Some(n) => Ok(data::split(records, n, split.seed)?.1),
        None => Ok(records),
    }
}

fn check_variant(expected: Option<ModelVariant>, found: ModelVariant) -> Result<(), CliError> {
    match expected {
        Some(expected) if expected != found => {
            Err(PipelineError::VariantMismatch { expected, found }.into())
        }
        _ => Ok(()),
    }
}

pub fn generate(
    cfg: &RunConfig,
    n: Option<usize>,
    seed: Option<u64>,
    dim: Option<usize>,
    noise: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut generator = cfg.generator.clone();
    if let Some(n) = n {
        generator.n_records = n;
    }
    if let Some(d) = dim {
        generator.dim = d;
    }
    if let Some(s) = noise {
        generator.noise = s;
    }
    let seed = seed.or(cfg.generator_seed).unwrap_or(0);
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let manifest_path = out.join(data::MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    }
    let records = data::generate_synthetic(&generator, seed)?;
    for r in &records {
        data::write_record(out, r)?;
    }
    let manifest = Manifest {
        seed,
        ids: records.iter().map(|r| r.id().to_string()).collect(),
        generator: Some(serde_json::to_value(&generator).expect("generator config serializes")),
    };
    data::write_manifest(out, &manifest)?;
    log::info!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

pub fn train(
    data_dir: &Path,
    out: &Path,
    log_path: &Path,
    config: &TrainConfig,
    split: &Split,
) -> Result<(), CliError> {
    config.validate()?;
    let records = training_records(data_dir, split)?;
    let file = File::create(log_path).map_err(|e| CliError::io(log_path, e))?;
    let mut log_file = BufWriter::new(file);
    writeln!(log_file, "{}", TrainingLog::CSV_HEADER).map_err(|e| CliError::io(log_path, e))?;
    let mut write_error = None;
    let result = pipeline::train_with(&records, config, |entry| {
        if write_error.is_some() {
            return;
        }
        let written =
            writeln!(log_file, "{}", TrainingLog::csv_row(entry)).and_then(|_| log_file.flush());
        if let Err(e) = written {
            write_error = Some(e);
        }
        log::info!("epoch {} total loss {:.6}", entry.epoch, entry.total);
    });
    if let Some(e) = write_error {
        return Err(CliError::io(log_path, e));
    }
    let (model, log) = result?;
    pipeline::write_model(out, &model)?;
    log::info!(
        "trained {} for {} epochs; model written to {}",
        config.variant,
        log.entries.len(),
        out.display()
    );
    Ok(())
}

pub enum Source {
    Model(PathBuf),
    Predictions(PathBuf),
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn evaluate(
    data_dir: &Path,
    source: Source,
    expected: Option<ModelVariant>,
    out: Option<&Path>,
    split: &Split,
) -> Result<(), CliError> {
    let report = match source {
        Source::Model(path) => {
            let model = pipeline::read_model(&path)?;
            check_variant(expected, model.variant)?;
            pipeline::evaluate(&model, &test_records(data_dir, split)?)?
        }
        Source::Predictions(path) => {
            let predictions = read_predictions(&path)?;
            if let Some(first) = predictions.first() {
                check_variant(expected, first.variant)?;
            }
            pipeline::evaluate_predictions(&predictions, &test_records(data_dir, split)?)?
        }
    };
    print!("{}", report.render_table());
    if let Some(path) = out {
        write_file(path, &report.to_csv())?;
    }
    Ok(())
}

pub fn predict(
    model_path: &Path,
    data_dir: &Path,
    id: Option<&str>,
    out: &Path,
    split: &Split,
) -> Result<(), CliError> {
    let model = pipeline::read_model(model_path)?;
    let records = match id {
        Some(id) => vec![data::load_record(data_dir, id)?],
        None => test_records(data_dir, split)?,
    };
    let predictions: Vec<Prediction> = records
        .iter()
        .map(|r| pipeline::infer(&model, &r.embeddings, &r.sheet))
        .collect::<Result<_, _>>()?;
    for p in &predictions {
        for w in &p.warnings {
            log::warn!("{}: {w}", p.id);
        }
    }
    let mut json = serde_json::to_string_pretty(&predictions).expect("predictions serialize");
    json.push('\n');
    write_file(out, &json)
}

pub fn report(
    model_path: &Path,
    data_dir: &Path,
    id: &str,
    format: ReportFormat,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = pipeline::read_model(model_path)?;
    let record = data::load_record(data_dir, id)?;
    let judgment = pipeline::predict(&model, &record.embeddings, &record.sheet)?;
    let text = match format {
        ReportFormat::Text => report::render_text(&judgment),
        ReportFormat::Html => report::render_html(&judgment),
    };
    emit(out, &text)
}

pub fn ablation(
    data_dir: &Path,
    out: Option<&Path>,
    base: &TrainConfig,
    split: &Split,
) -> Result<(), CliError> {
    base.validate()?;
    let train_count = split.train_count.expect("ablation always splits");
    let (train_set, test_set) = data::split(load(data_dir)?, train_count, split.seed)?;
    let table = pipeline::run_ablation(&train_set, &test_set, base)?;
    print!("{}", table.render());
    if let Some(path) = out {
        write_file(path, &table.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Validation("x".into()).exit_code(), 1);
        assert_eq!(CliError::io(Path::new("a"), "denied").exit_code(), 2);
        assert_eq!(
            CliError::from(PipelineError::Divergence {
                epoch: 3,
                component: "total"
            })
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(PipelineError::Io {
                path: "m".into(),
                message: "gone".into()
            })
            .exit_code(),
            2
        );
        let io = DataError::Io {
            path: "d".into(),
            message: "gone".into(),
        };
        assert_eq!(CliError::from(PipelineError::from(io)).exit_code(), 2);
        assert_eq!(
            CliError::from(DataError::MissingPair {
                id: "p".into(),
                missing: "sheet"
            })
            .exit_code(),
            1
        );
        assert_eq!(
            CliError::from(PipelineError::TooFewRecords(2)).exit_code(),
            1
        );
    }
}
