use super::layers::{log_softmax_rows, softmax_rows};
use super::{KernelError, Tensor};

fn check_labels(
    rows: usize,
    classes: usize,
    labels: &[usize],
    mask: &[bool],
) -> Result<(), KernelError> {
    if labels.len() != rows {
        return Err(KernelError::DimensionMismatch {
            op: "cross_entropy labels",
            expected: rows,
            found: labels.len(),
        });
    }
    if mask.len() != rows {
        return Err(KernelError::DimensionMismatch {
            op: "cross_entropy mask",
            expected: rows,
            found: mask.len(),
        });
    }
    if let Some(&label) = labels
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| l)
        .find(|&&l| l >= classes)
    {
        return Err(KernelError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean negative log-likelihood over unmasked rows of a probability matrix.
///
/// A fully masked input yields 0 and logs a warning.
pub fn cross_entropy(
    probabilities: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<f64, KernelError> {
    check_labels(probabilities.rows(), probabilities.cols(), labels, mask)?;
    let valid = mask.iter().filter(|&&m| m).count();
    if valid == 0 {
        log::warn!("cross_entropy called with every window masked out; returning 0");
        return Ok(0.0);
    }
    let total: f64 = (0..probabilities.rows())
        .filter(|&t| mask[t])
        .map(|t| -probabilities.get(t, labels[t]).ln())
        .sum();
    Ok(total / valid as f64)
}

/// Cross-entropy computed from logits, with its gradient with respect to the logits.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Tensor), KernelError> {
    check_labels(logits.rows(), logits.cols(), labels, mask)?;
    let mut grad = Tensor::zeros(logits.rows(), logits.cols());
    let valid = mask.iter().filter(|&&m| m).count();
    if valid == 0 {
        log::warn!("cross_entropy called with every window masked out; returning 0");
        return Ok((0.0, grad));
    }
    let logp = log_softmax_rows(logits);
    let probs = softmax_rows(logits);
    let inv = 1.0 / valid as f64;
    let mut loss = 0.0;
    for t in (0..logits.rows()).filter(|&t| mask[t]) {
        loss -= logp.get(t, labels[t]);
        for (g, &p) in grad.row_mut(t).iter_mut().zip(probs.row(t)) {
            *g = p * inv;
        }
        grad.row_mut(t)[labels[t]] -= inv;
    }
    Ok((loss * inv, grad))
}

/// Mean squared error over paired values, with the gradient with respect to `predictions`.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), KernelError> {
    if predictions.len() != targets.len() {
        return Err(KernelError::DimensionMismatch {
            op: "mse",
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| {
            let d = p - y;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}
