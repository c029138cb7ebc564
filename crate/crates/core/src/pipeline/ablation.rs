use std::fmt::Write as _;
use std::time::{Duration, Instant};

use super::evaluate::{evaluate, Correlation, EvaluationReport};
use super::model::ModelParams;
use super::train::{train, TrainConfig, TrainingLog};
use super::{ModelVariant, PipelineError};
use crate::data::PerformanceRecord;

/// Feature columns of the ablation table.
pub const FEATURES: [&str; 5] = [
    "Score",
    "TES+PCS",
    "Subscores",
    "DeltaSubscores",
    "Segments",
];

fn features(v: ModelVariant) -> [bool; 5] {
    use ModelVariant::*;
    [
        true,
        v != ScoreOnly,
        matches!(v, Subscores | SubscoresSegments),
        matches!(v, DeltaSubscores | Full),
        v.uses_segments(),
    ]
}

pub struct AblationRow {
    pub variant: ModelVariant,
    pub features: [bool; 5],
    pub report: EvaluationReport,
    pub log: TrainingLog,
    pub model: ModelParams,
    /// Wall-clock time spent training and evaluating this variant.
    pub elapsed: Duration,
}

pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Trains every variant on `train_set` with `base` (variant overridden) and
/// evaluates each on `test_set`.
pub fn run_ablation(
    train_set: &[PerformanceRecord],
    test_set: &[PerformanceRecord],
    base: &TrainConfig,
) -> Result<AblationTable, PipelineError> {
    let mut rows = Vec::new();
    for variant in ModelVariant::ALL {
        log::info!("ablation: training {variant}");
        let start = Instant::now();
        let config = TrainConfig {
            variant,
            ..base.clone()
        };
        let (model, log) = train(train_set, &config)?;
        let report = evaluate(&model, test_set)?;
        rows.push(AblationRow {
            variant,
            features: features(variant),
            report,
            log,
            model,
            elapsed: start.elapsed(),
        });
    }
    Ok(AblationTable { rows })
}

fn cell(c: &Correlation) -> String {
    match c {
        Correlation::Value(v) => v.to_string(),
        Correlation::Undefined(_) => "undefined".into(),
        Correlation::NotPredicted => String::new(),
    }
}

impl AblationTable {
    pub const METRIC_COLUMNS: [&'static str; 6] = [
        "spearman_tes",
        "spearman_pcs",
        "spearman_total",
        "pearson_tes",
        "pearson_pcs",
        "pearson_total",
    ];

    fn metrics(r: &AblationRow) -> [&Correlation; 6] {
        let (s, p) = (&r.report.spearman, &r.report.pearson);
        [&s.tes, &s.pcs, &s.total, &p.tes, &p.pcs, &p.total]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant");
        for f in FEATURES {
            let _ = write!(s, ",{}", f.to_lowercase().replace('+', "_"));
        }
        for m in Self::METRIC_COLUMNS {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(r.variant.name());
            for f in r.features {
                s.push_str(if f { ",1" } else { ",0" });
            }
            for c in Self::metrics(r) {
                let _ = write!(s, ",{}", cell(c));
            }
            s.push('\n');
        }
        s
    }

    /// Feature checkmarks, then Spearman and Pearson for TES, PCS and Total.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let widths: Vec<usize> = FEATURES.iter().map(|f| f.len().max(5)).collect();
        for (f, w) in FEATURES.iter().zip(&widths) {
            let _ = write!(s, "{f:^w$} ");
        }
        let _ = writeln!(s, "| {:^23} | {:^23}", "Spearman", "Pearson");
        for w in &widths {
            let _ = write!(s, "{:w$} ", "");
        }
        let _ = writeln!(
            s,
            "| {:>7}{:>8}{:>8} | {:>7}{:>8}{:>8}",
            "TES", "PCS", "Total", "TES", "PCS", "Total"
        );
        for r in &self.rows {
            for (f, w) in r.features.iter().zip(&widths) {
                let _ = write!(s, "{:^w$} ", if *f { "x" } else { "" });
            }
            let m = Self::metrics(r).map(|c| c.to_string());
            let _ = writeln!(
                s,
                "| {:>7}{:>8}{:>8} | {:>7}{:>8}{:>8}",
                m[0], m[1], m[2], m[3], m[4], m[5]
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_rows_match_the_published_layout() {
        let rows: Vec<[bool; 5]> = ModelVariant::ALL.iter().map(|&v| features(v)).collect();
        assert_eq!(
            rows,
            vec![
                [true, false, false, false, false],
                [true, true, false, false, false],
                [true, true, true, false, false],
                [true, true, true, false, true],
                [true, true, false, true, false],
                [true, true, false, true, true],
            ]
        );
    }
}
