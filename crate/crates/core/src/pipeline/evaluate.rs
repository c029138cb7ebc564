use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::infer::{infer, Prediction};
use super::model::ModelParams;
use super::{ModelVariant, PipelineError};
use crate::data::PerformanceRecord;
use crate::metrics::{pearson, spearman, MetricsError, PairedSample};
use crate::segmentation::{dice, iou};

/// One correlation cell. Constant or missing predictions yield a labelled
/// non-value instead of an error, so a report can always be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum Correlation {
    Value(f64),
    /// The coefficient is undefined for this sample (for example constant input).
    Undefined(String),
    /// The variant does not predict this quantity.
    NotPredicted,
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Correlation::Value(v) => write!(f, "{v:.3}"),
            Correlation::Undefined(_) => f.write_str("undef"),
            Correlation::NotPredicted => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub tes: Correlation,
    pub pcs: Correlation,
    pub total: Correlation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tertile {
    Low,
    Med,
    High,
}

impl Tertile {
    pub const ALL: [Tertile; 3] = [Tertile::Low, Tertile::Med, Tertile::High];

    pub fn name(self) -> &'static str {
        match self {
            Tertile::Low => "low",
            Tertile::Med => "med",
            Tertile::High => "high",
        }
    }
}

/// Mean absolute TES error of the records in one IoU tertile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TertileRow {
    pub tertile: Tertile,
    pub count: usize,
    pub iou_min: f64,
    pub iou_max: f64,
    pub mean_abs_tes_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEvaluation {
    pub id: String,
    pub tes_predicted: Option<f64>,
    pub tes_truth: f64,
    pub pcs_predicted: Option<f64>,
    pub pcs_truth: f64,
    pub total_predicted: f64,
    pub total_truth: f64,
    pub dice: Option<f64>,
    pub iou: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: ModelVariant,
    pub spearman: CorrelationRow,
    pub pearson: CorrelationRow,
    pub mean_dice: Option<f64>,
    pub mean_iou: Option<f64>,
    /// Present when every prediction carries a segmentation.
    pub tertiles: Option<Vec<TertileRow>>,
    pub records: Vec<RecordEvaluation>,
}

fn correlate(
    pred: &[Option<f64>],
    truth: &[f64],
    f: fn(PairedSample<'_>) -> Result<f64, MetricsError>,
) -> Correlation {
    let Some(pred) = pred.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Correlation::NotPredicted;
    };
    match PairedSample::new(&pred, truth).and_then(f) {
        Ok(v) => Correlation::Value(v),
        Err(e) => {
            log::warn!("correlation undefined: {e}");
            Correlation::Undefined(e.to_string())
        }
    }
}

fn correlation_row(
    records: &[RecordEvaluation],
    f: fn(PairedSample<'_>) -> Result<f64, MetricsError>,
) -> CorrelationRow {
    let col = |p: fn(&RecordEvaluation) -> Option<f64>, t: fn(&RecordEvaluation) -> f64| {
        let pred: Vec<Option<f64>> = records.iter().map(p).collect();
        let truth: Vec<f64> = records.iter().map(t).collect();
        correlate(&pred, &truth, f)
    };
    CorrelationRow {
        tes: col(|r| r.tes_predicted, |r| r.tes_truth),
        pcs: col(|r| r.pcs_predicted, |r| r.pcs_truth),
        total: col(|r| Some(r.total_predicted), |r| r.total_truth),
    }
}

/// Groups records by IoU rank into thirds `[k n / 3, (k + 1) n / 3)`.
fn tertiles(records: &[RecordEvaluation]) -> Option<Vec<TertileRow>> {
    let mut scored: Vec<(f64, f64)> = records
        .iter()
        .map(|r| Some((r.iou?, (r.tes_predicted? - r.tes_truth).abs())))
        .collect::<Option<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scored.len();
    Some(
        Tertile::ALL
            .iter()
            .enumerate()
            .map(|(k, &tertile)| {
                let group = &scored[k * n / 3..(k + 1) * n / 3];
                let count = group.len();
                let mean = if count == 0 {
                    0.0
                } else {
                    group.iter().map(|g| g.1).sum::<f64>() / count as f64
                };
                TertileRow {
                    tertile,
                    count,
                    iou_min: group.first().map_or(f64::NAN, |g| g.0),
                    iou_max: group.last().map_or(f64::NAN, |g| g.0),
                    mean_abs_tes_error: mean,
                }
            })
            .collect(),
    )
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<_>>()?;
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores predictions against the records' ground truth.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    records: &[PerformanceRecord],
) -> Result<EvaluationReport, PipelineError> {
    if records.len() < 3 {
        return Err(PipelineError::TooFewRecords(records.len()));
    }
    let by_id: HashMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let variant = predictions
        .first()
        .map(|p| p.variant)
        .ok_or_else(|| PipelineError::MissingPrediction(records[0].id().to_string()))?;
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let p = by_id
            .get(r.id())
            .ok_or_else(|| PipelineError::MissingPrediction(r.id().to_string()))?;
        if p.variant != variant {
            return Err(PipelineError::VariantMismatch {
                expected: variant,
                found: p.variant,
            });
        }
        let truth = r
            .sheet
            .truth
            .as_ref()
            .ok_or_else(|| PipelineError::MissingTruth {
                id: r.id().to_string(),
                what: "scores",
            })?;
        let tes_truth = r.sheet.composed_tes(&truth.goe);
        let pcs_truth = r.sheet.composed_pcs(&truth.pcs);
        let (d, i) = match (p.labeling(), &r.truth_labels) {
            (Some(pred), Some(t)) => (Some(dice(&pred, t)?), Some(iou(&pred, t)?)),
            _ => (None, None),
        };
        rows.push(RecordEvaluation {
            id: r.id().to_string(),
            tes_predicted: p.tes,
            tes_truth,
            pcs_predicted: p.pcs,
            pcs_truth,
            total_predicted: p.total,
            total_truth: tes_truth + pcs_truth,
            dice: d,
            iou: i,
            warnings: p.warnings.clone(),
        });
    }
    Ok(EvaluationReport {
        variant,
        spearman: correlation_row(&rows, spearman),
        pearson: correlation_row(&rows, pearson),
        mean_dice: mean_of(rows.iter().map(|r| r.dice)),
        mean_iou: mean_of(rows.iter().map(|r| r.iou)),
        tertiles: tertiles(&rows),
        records: rows,
    })
}

/// Runs inference on every record and scores it.
pub fn evaluate(
    model: &ModelParams,
    records: &[PerformanceRecord],
) -> Result<EvaluationReport, PipelineError> {
    if records.len() < 3 {
        return Err(PipelineError::TooFewRecords(records.len()));
    }
    let predictions: Vec<Prediction> = records
        .iter()
        .map(|r| infer(model, &r.embeddings, &r.sheet))
        .collect::<Result<_, _>>()?;
    evaluate_predictions(&predictions, records)
}

fn cell(c: &Correlation) -> String {
    match c {
        Correlation::Value(v) => v.to_string(),
        Correlation::Undefined(_) => "undefined".into(),
        Correlation::NotPredicted => "".into(),
    }
}

impl EvaluationReport {
    /// Long-format CSV: `metric,subset,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,subset,value\n");
        for (name, row) in [("spearman", &self.spearman), ("pearson", &self.pearson)] {
            for (subset, c) in [("tes", &row.tes), ("pcs", &row.pcs), ("total", &row.total)] {
                let _ = writeln!(s, "{name},{subset},{}", cell(c));
            }
        }
        if let Some(d) = self.mean_dice {
            let _ = writeln!(s, "dice,mean,{d}");
        }
        if let Some(i) = self.mean_iou {
            let _ = writeln!(s, "iou,mean,{i}");
        }
        for t in self.tertiles.iter().flatten() {
            let _ = writeln!(s, "tertile_count,{},{}", t.tertile.name(), t.count);
            let _ = writeln!(
                s,
                "tertile_tes_abs_error,{},{}",
                t.tertile.name(),
                t.mean_abs_tes_error
            );
        }
        s
    }

    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "variant: {}  records: {}",
            self.variant,
            self.records.len()
        );
        let _ = writeln!(s, "{:<10}{:>8}{:>8}{:>8}", "", "TES", "PCS", "Total");
        for (name, row) in [("Spearman", &self.spearman), ("Pearson", &self.pearson)] {
            let _ = writeln!(
                s,
                "{name:<10}{:>8}{:>8}{:>8}",
                row.tes.to_string(),
                row.pcs.to_string(),
                row.total.to_string()
            );
        }
        if let (Some(d), Some(i)) = (self.mean_dice, self.mean_iou) {
            let _ = writeln!(s, "Dice {d:.3}  IoU {i:.3}");
        }
        if let Some(ts) = &self.tertiles {
            let _ = writeln!(s, "TES error by IoU tertile:");
            for t in ts {
                let _ = writeln!(
                    s,
                    "  {:<5} n={:<3} IoU {:.3}-{:.3}  mean |TES error| {:.3}",
                    t.tertile.name(),
                    t.count,
                    t.iou_min,
                    t.iou_max,
                    t.mean_abs_tes_error
                );
            }
        }
        let flagged = self
            .records
            .iter()
            .filter(|r| !r.warnings.is_empty())
            .count();
        if flagged > 0 {
            let _ = writeln!(s, "{flagged} record(s) carry warnings");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn records(n: usize) -> Vec<PerformanceRecord> {
        let config = SyntheticConfig {
            n_records: n,
            dim: 8,
            ..SyntheticConfig::default()
        };
        generate_synthetic(&config, 9).unwrap()
    }

    fn truth_totals(r: &PerformanceRecord) -> (f64, f64) {
        let t = r.sheet.truth.as_ref().unwrap();
        (r.sheet.composed_tes(&t.goe), r.sheet.composed_pcs(&t.pcs))
    }

    fn oracle(records: &[PerformanceRecord], sign: f64) -> Vec<Prediction> {
        records
            .iter()
            .map(|r| {
                let (tes, pcs) = truth_totals(r);
                Prediction {
                    id: r.id().to_string(),
                    variant: ModelVariant::Full,
                    tes: Some(sign * tes),
                    pcs: Some(sign * pcs),
                    total: sign * (tes + pcs),
                    segments: r.truth_labels.as_ref().map(|l| l.segments()),
                    judgment: None,
                    warnings: Vec::new(),
                }
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let data = records(6);
        let report = evaluate_predictions(&oracle(&data, 1.0), &data).unwrap();
        for row in [&report.spearman, &report.pearson] {
            for c in [&row.tes, &row.pcs, &row.total] {
                assert!((c.value().unwrap() - 1.0).abs() < 1e-12, "{c:?}");
            }
        }
        assert_eq!(report.mean_dice, Some(1.0));
        assert_eq!(report.mean_iou, Some(1.0));
    }

    #[test]
    fn negated_predictions_give_minus_one() {
        let data = records(5);
        let report = evaluate_predictions(&oracle(&data, -1.0), &data).unwrap();
        for c in [
            &report.spearman.total,
            &report.spearman.tes,
            &report.pearson.total,
        ] {
            assert!((c.value().unwrap() + 1.0).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn thirty_records_split_into_equal_tertiles() {
        let data = records(30);
        let mut preds = oracle(&data, 1.0);
        // degrade segmentations by different amounts so IoU varies
        for (k, p) in preds.iter_mut().enumerate() {
            let mut labels = data[k].truth_labels.clone().unwrap().labels().to_vec();
            for l in labels.iter_mut().take(k) {
                *l = crate::rubric::ActionType::Transition;
            }
            p.segments = Some(crate::data::SegmentLabeling::new(labels).segments());
        }
        let report = evaluate_predictions(&preds, &data).unwrap();
        let ts = report.tertiles.unwrap();
        assert_eq!(
            ts.iter().map(|t| t.count).collect::<Vec<_>>(),
            vec![10, 10, 10]
        );
        assert!(ts[0].iou_max <= ts[1].iou_min && ts[1].iou_max <= ts[2].iou_min);
    }

    #[test]
    fn tertile_sizes_differ_by_at_most_one() {
        for n in 3..40 {
            let rows: Vec<RecordEvaluation> = (0..n)
                .map(|i| RecordEvaluation {
                    id: i.to_string(),
                    tes_predicted: Some(1.0),
                    tes_truth: 0.0,
                    pcs_predicted: None,
                    pcs_truth: 0.0,
                    total_predicted: 0.0,
                    total_truth: 0.0,
                    dice: Some(0.5),
                    iou: Some(((i * 7) % n) as f64 / n as f64),
                    warnings: vec![],
                })
                .collect();
            let counts: Vec<usize> = tertiles(&rows).unwrap().iter().map(|t| t.count).collect();
            assert_eq!(counts.iter().sum::<usize>(), n);
            assert!(
                counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1,
                "{n}: {counts:?}"
            );
        }
    }

    #[test]
    fn fewer_than_three_records_is_an_error() {
        let data = records(2);
        assert!(matches!(
            evaluate_predictions(&oracle(&data, 1.0), &data),
            Err(PipelineError::TooFewRecords(2))
        ));
    }

    #[test]
    fn constant_predictions_are_flagged_not_fatal() {
        let data = records(5);
        let mut preds = oracle(&data, 1.0);
        for p in &mut preds {
            p.total = 50.0;
        }
        let report = evaluate_predictions(&preds, &data).unwrap();
        assert!(matches!(report.spearman.total, Correlation::Undefined(_)));
        assert!(matches!(report.pearson.total, Correlation::Undefined(_)));
        assert!(report.to_csv().contains("spearman,total,undefined"));
    }

    #[test]
    fn score_only_cells_are_not_predicted() {
        let data = records(4);
        let mut preds = oracle(&data, 1.0);
        for p in &mut preds {
            p.variant = ModelVariant::ScoreOnly;
            p.tes = None;
            p.pcs = None;
            p.segments = None;
        }
        let report = evaluate_predictions(&preds, &data).unwrap();
        assert_eq!(report.spearman.tes, Correlation::NotPredicted);
        assert!(report.spearman.total.value().is_some());
        assert!(report.tertiles.is_none() && report.mean_dice.is_none());
        assert!(report.render_table().contains("n/a"));
    }

    #[test]
    fn missing_prediction_is_reported() {
        let data = records(4);
        let preds = oracle(&data[..3], 1.0);
        assert!(matches!(
            evaluate_predictions(&preds, &data),
            Err(PipelineError::MissingPrediction(_))
        ));
    }
}
