use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{uniform_segments, Architecture, ModelParams};
use super::{ElementTarget, ModelVariant, PipelineError};
use crate::data::PerformanceRecord;
use crate::heads::training_targets;
use crate::kernel::{adam_step, AdamConfig, AdamState, Parameters};
use crate::rubric::Segment;
use crate::segmentation::{segmentation_loss_grad, SmoothingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub segmentation: f64,
    pub element: f64,
    pub sequence: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            segmentation: 1.0,
            element: 1.0,
            sequence: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: ModelVariant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub weights: LossWeights,
    pub smoothing: SmoothingConfig,
    /// Stop after this many epochs without an improvement of at least `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    pub seed: u64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: ModelVariant::Full,
            learning_rate: 0.0005,
            batch_size: 60,
            max_epochs: 300,
            weights: LossWeights::default(),
            smoothing: SmoothingConfig::default(),
            patience: 20,
            min_improvement: 1e-6,
            seed: 0,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        let w = self.weights;
        if [w.segmentation, w.element, w.sequence]
            .iter()
            .any(|&v| !(v >= 0.0 && v.is_finite()))
        {
            return bad("loss weights must be finite and non-negative");
        }
        if !(self.smoothing.epsilon > 0.0 && self.smoothing.lambda >= 0.0) {
            return bad("smoothing epsilon must be positive and lambda non-negative");
        }
        Ok(())
    }
}

/// Mean per-record loss components of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub segmentation: f64,
    pub element: f64,
    pub sequence: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<EpochLoss>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "epoch,segmentation,element,sequence,total";

    pub fn csv_row(e: &EpochLoss) -> String {
        format!(
            "{},{},{},{},{}",
            e.epoch, e.segmentation, e.element, e.sequence, e.total
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.entries {
            let _ = writeln!(s, "{}", Self::csv_row(e));
        }
        s
    }
}

struct Targets {
    element: Vec<f64>,
    sequence: Vec<f64>,
}

fn targets(variant: ModelVariant, record: &PerformanceRecord) -> Result<Targets, PipelineError> {
    let (goe, pcs) = training_targets(record)?;
    let sheet = &record.sheet;
    let element = match variant.element_target() {
        Some(ElementTarget::Goe) => goe.clone(),
        Some(ElementTarget::Tes) => sheet
            .elements
            .iter()
            .zip(&goe)
            .map(|(e, g)| e.base + g)
            .collect(),
        None => Vec::new(),
    };
    let tes = sheet.composed_tes(&goe);
    let pcs_total = sheet.composed_pcs(&pcs);
    let sequence = match variant {
        ModelVariant::ScoreOnly => vec![tes + pcs_total],
        ModelVariant::TesPcs => vec![tes, pcs_total],
        _ => pcs.to_vec(),
    };
    Ok(Targets { element, sequence })
}

fn truth_segments(
    record: &PerformanceRecord,
    variant: ModelVariant,
) -> Result<Vec<Segment>, PipelineError> {
    if variant.uses_segments() {
        let labels = record
            .truth_labels
            .as_ref()
            .ok_or_else(|| PipelineError::MissingTruth {
                id: record.id().to_string(),
                what: "segment labels",
            })?;
        Ok(labels.element_segments())
    } else {
        Ok(uniform_segments(
            &record.sheet,
            record.embeddings.valid_count(),
        ))
    }
}

#[derive(Default, Clone, Copy)]
struct RecordLoss {
    segmentation: f64,
    element: f64,
    sequence: f64,
}

/// Loss of one record; accumulates weighted gradients into `grads`.
fn record_loss(
    model: &ModelParams,
    record: &PerformanceRecord,
    config: &TrainConfig,
    grads: &mut ModelParams,
) -> Result<RecordLoss, PipelineError> {
    let variant = model.variant;
    let w = config.weights;
    let t = targets(variant, record)?;
    let windows = record.embeddings.valid_windows();
    let mut out = RecordLoss::default();

    if let (Some(net), Some(g)) = (&model.segmenter, grads.segmenter.as_mut()) {
        let labels = record
            .truth_labels
            .as_ref()
            .ok_or_else(|| PipelineError::MissingTruth {
                id: record.id().to_string(),
                what: "segment labels",
            })?;
        let trace = net.forward(&windows)?;
        let mask = vec![true; windows.rows()];
        let mut loss = segmentation_loss_grad(
            &trace.logits(),
            &labels.class_indices(),
            &mask,
            config.smoothing,
        )?;
        for gl in &mut loss.grad_logits {
            gl.scale(w.segmentation);
        }
        net.backward(&trace, &loss.grad_logits, g);
        out.segmentation = loss.total;
    }

    if let (Some(head), Some(g)) = (&model.element, grads.element.as_mut()) {
        let segments = truth_segments(record, variant)?;
        let blocks = model.blocks(&record.embeddings, &segments)?;
        let n = blocks.len() as f64;
        for ((block, element), &target) in blocks.iter().zip(&record.sheet.elements).zip(&t.element)
        {
            let trace = head.forward(&block.content(), element.action)?;
            let diff = trace.value() - target;
            out.element += diff * diff / n;
            head.backward(&trace, w.element * 2.0 * diff / n, g);
        }
    }

    let trace = model.sequence.forward(&windows)?;
    let n = t.sequence.len() as f64;
    let grad: Vec<f64> = trace
        .values()
        .iter()
        .zip(&t.sequence)
        .map(|(v, target)| {
            let diff = v - target;
            out.sequence += diff * diff / n;
            w.sequence * 2.0 * diff / n
        })
        .collect();
    model.sequence.backward(&trace, &grad, &mut grads.sequence);
    Ok(out)
}

/// Weighted training loss of one record and its gradient with respect to
/// every model parameter.
pub fn composite_loss(
    model: &ModelParams,
    record: &PerformanceRecord,
    config: &TrainConfig,
) -> Result<(f64, ModelParams), PipelineError> {
    let mut grads = model.zeros_like();
    let l = record_loss(model, record, config, &mut grads)?;
    let w = config.weights;
    Ok((
        w.segmentation * l.segmentation + w.element * l.element + w.sequence * l.sequence,
        grads,
    ))
}

fn check_records(records: &[PerformanceRecord], config: &TrainConfig) -> Result<(), PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let dim = records[0].embeddings.dim();
    for r in records {
        r.validate()?;
        if r.embeddings.dim() != dim {
            return Err(crate::data::DataError::DimensionMismatch {
                id: r.id().to_string(),
                expected: dim,
                found: r.embeddings.dim(),
            }
            .into());
        }
        targets(config.variant, r)?;
        truth_segments(r, config.variant)?;
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Starts every regression output at the mean of its training targets.
fn init_output_biases(
    model: &mut ModelParams,
    records: &[PerformanceRecord],
) -> Result<(), PipelineError> {
    let all: Vec<Targets> = records
        .iter()
        .map(|r| targets(model.variant, r))
        .collect::<Result<_, _>>()?;
    if let Some(head) = &mut model.element {
        head.output.bias.set(
            0,
            0,
            mean(all.iter().flat_map(|t| t.element.iter().copied())),
        );
    }
    for k in 0..model.sequence.outputs() {
        model
            .sequence
            .output
            .bias
            .set(0, k, mean(all.iter().map(|t| t.sequence[k])));
    }
    Ok(())
}

/// Trains with default reporting; see [`train_with`].
pub fn train(
    records: &[PerformanceRecord],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainingLog), PipelineError> {
    train_with(records, config, |_| {})
}

/// Seeded mini-batch Adam on the variant's weighted loss. `on_epoch` sees
/// every log entry as soon as it is complete.
pub fn train_with(
    records: &[PerformanceRecord],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<(ModelParams, TrainingLog), PipelineError> {
    config.validate()?;
    check_records(records, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelParams::new(
        config.variant,
        records[0].embeddings.dim(),
        config.architecture,
        &mut rng,
    )?;
    init_output_biases(&mut model, records)?;
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&model, adam);
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = RecordLoss::default();
        for batch in order.chunks(config.batch_size) {
            let mut grads = model.zeros_like();
            for &i in batch {
                let l = record_loss(&model, &records[i], config, &mut grads)?;
                sum.segmentation += l.segmentation;
                sum.element += l.element;
                sum.sequence += l.sequence;
            }
            grads.scale_all(1.0 / batch.len() as f64);
            if !grads.all_finite() {
                return Err(PipelineError::Divergence {
                    epoch,
                    component: "gradient",
                });
            }
            adam_step(&mut model, &grads, &mut state)?;
        }
        let n = records.len() as f64;
        let w = config.weights;
        let (seg, el, sq) = (sum.segmentation / n, sum.element / n, sum.sequence / n);
        let entry = EpochLoss {
            epoch,
            segmentation: seg,
            element: el,
            sequence: sq,
            total: w.segmentation * seg + w.element * el + w.sequence * sq,
        };
        for (value, component) in [
            (seg, "segmentation"),
            (el, "element"),
            (sq, "sequence"),
            (entry.total, "total"),
        ] {
            if !value.is_finite() {
                return Err(PipelineError::Divergence { epoch, component });
            }
        }
        log::debug!("epoch {epoch}: total {:.6}", entry.total);
        on_epoch(&entry);
        log.entries.push(entry);

        if best - entry.total >= config.min_improvement {
            best = entry.total;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::info!("stopping at epoch {epoch}: no improvement for {stale} epochs");
                break;
            }
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::heads::HeadConfig;
    use crate::segmentation::MsTcnConfig;

    fn tiny_config(variant: ModelVariant, epochs: usize) -> TrainConfig {
        TrainConfig {
            variant,
            max_epochs: epochs,
            learning_rate: 0.01,
            architecture: Architecture {
                mstcn: MsTcnConfig {
                    stages: 2,
                    layers: 3,
                    channels: 8,
                    kernel: 3,
                },
                head: HeadConfig {
                    channels: 8,
                    kernel: 3,
                },
                ..Architecture::default()
            },
            ..TrainConfig::default()
        }
    }

    fn records(n: usize, seed: u64) -> Vec<PerformanceRecord> {
        let config = SyntheticConfig {
            n_records: n,
            dim: 8,
            t_valid: (60, 80),
            ..SyntheticConfig::default()
        };
        generate_synthetic(&config, seed).unwrap()
    }

    #[test]
    fn defaults_follow_the_published_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 0.0005);
        assert_eq!(c.batch_size, 60);
        assert_eq!(c.max_epochs, 300);
        assert_eq!(
            c.weights,
            LossWeights {
                segmentation: 1.0,
                element: 1.0,
                sequence: 1.0
            }
        );
    }

    #[test]
    fn single_record_overfits_in_five_epochs() {
        let data = records(1, 3);
        for variant in ModelVariant::ALL {
            let (_, log) = train(&data, &tiny_config(variant, 5)).unwrap();
            assert_eq!(log.entries.len(), 5, "{variant}");
            assert!(
                log.entries[4].total <= log.entries[0].total,
                "{variant}: {:?}",
                log.entries
            );
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let data = records(4, 5);
        let config = TrainConfig {
            batch_size: 2,
            ..tiny_config(ModelVariant::Full, 3)
        };
        let (a, la) = train(&data, &config).unwrap();
        let (b, lb) = train(&data, &config).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(la, lb);
        let (c, _) = train(&data, &TrainConfig { seed: 1, ..config }).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(matches!(
            train(&[], &TrainConfig::default()),
            Err(PipelineError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn records_without_truth_are_rejected() {
        let mut data = records(2, 1);
        data[1].sheet.truth = None;
        assert!(matches!(
            train(&data, &tiny_config(ModelVariant::Full, 1)),
            Err(PipelineError::Head(_))
        ));
        let mut data = records(2, 1);
        data[0].truth_labels = None;
        assert!(matches!(
            train(&data, &tiny_config(ModelVariant::Full, 1)),
            Err(PipelineError::MissingTruth { .. })
        ));
        // label-free variants do not need segment labels
        assert!(train(&data, &tiny_config(ModelVariant::DeltaSubscores, 1)).is_ok());
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        let data = records(2, 2);
        let config = TrainConfig {
            learning_rate: 1e300,
            ..tiny_config(ModelVariant::ScoreOnly, 50)
        };
        assert!(matches!(
            train(&data, &config),
            Err(PipelineError::Divergence { .. })
        ));
    }

    #[test]
    fn early_stop_after_patience() {
        let data = records(2, 2);
        let config = TrainConfig {
            patience: 3,
            min_improvement: 1e9,
            ..tiny_config(ModelVariant::TesPcs, 50)
        };
        let (_, log) = train(&data, &config).unwrap();
        // the first epoch always improves on infinity; then three stale epochs
        assert_eq!(log.entries.len(), 4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for c in [
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                weights: LossWeights {
                    element: -1.0,
                    ..LossWeights::default()
                },
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        }
    }

    #[test]
    fn log_csv_has_header_and_one_row_per_epoch() {
        let data = records(1, 3);
        let (_, log) = train(&data, &tiny_config(ModelVariant::TesPcs, 3)).unwrap();
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TrainingLog::CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
