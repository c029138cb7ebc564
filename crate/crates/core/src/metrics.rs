//! Rank and product-moment correlation.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("correlation needs at least 3 paired values, got {0}")]
    TooFewSamples(usize),
    #[error("paired samples differ in length ({predictions} predictions vs {truths} truths)")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("{0} side is constant; correlation is undefined")]
    ConstantInput(Side),
    #[error("non-finite value in {0} side")]
    NonFinite(Side),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Predictions,
    Truths,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Predictions => "prediction",
            Side::Truths => "truth",
        })
    }
}

/// Predictions paired with ground truths; finite and of equal length `n >= 3`.
#[derive(Debug, Clone, Copy)]
pub struct PairedSample<'a> {
    predictions: &'a [f64],
    truths: &'a [f64],
}

impl<'a> PairedSample<'a> {
    pub fn new(predictions: &'a [f64], truths: &'a [f64]) -> Result<Self, MetricsError> {
        if predictions.len() != truths.len() {
            return Err(MetricsError::LengthMismatch {
                predictions: predictions.len(),
                truths: truths.len(),
            });
        }
        if predictions.len() < 3 {
            return Err(MetricsError::TooFewSamples(predictions.len()));
        }
        if !predictions.iter().all(|v| v.is_finite()) {
            return Err(MetricsError::NonFinite(Side::Predictions));
        }
        if !truths.iter().all(|v| v.is_finite()) {
            return Err(MetricsError::NonFinite(Side::Truths));
        }
        Ok(PairedSample {
            predictions,
            truths,
        })
    }

    pub fn predictions(&self) -> &[f64] {
        self.predictions
    }

    pub fn truths(&self) -> &[f64] {
        self.truths
    }
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn rank_average(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

fn centered_correlation(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::ConstantInput(Side::Predictions));
    }
    if syy == 0.0 {
        return Err(MetricsError::ConstantInput(Side::Truths));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Two-pass, mean-centred Pearson correlation.
pub fn pearson(sample: PairedSample<'_>) -> Result<f64, MetricsError> {
    if is_constant(sample.predictions) {
        return Err(MetricsError::ConstantInput(Side::Predictions));
    }
    if is_constant(sample.truths) {
        return Err(MetricsError::ConstantInput(Side::Truths));
    }
    centered_correlation(sample.predictions, sample.truths)
}

/// Pearson correlation of average ranks.
pub fn spearman(sample: PairedSample<'_>) -> Result<f64, MetricsError> {
    if is_constant(sample.predictions) {
        return Err(MetricsError::ConstantInput(Side::Predictions));
    }
    if is_constant(sample.truths) {
        return Err(MetricsError::ConstantInput(Side::Truths));
    }
    centered_correlation(
        &rank_average(sample.predictions),
        &rank_average(sample.truths),
    )
}
