use super::SegmentationError;
use crate::data::SegmentLabeling;
use crate::rubric::ActionType;

fn check_lengths(pred: &SegmentLabeling, truth: &SegmentLabeling) -> Result<(), SegmentationError> {
    if pred.len() != truth.len() {
        return Err(SegmentationError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Dice coefficient `2 (a · â) / (|a|² + |â|²)` on flattened one-hot labels.
///
/// Two empty labelings score 1.
pub fn dice(pred: &SegmentLabeling, truth: &SegmentLabeling) -> Result<f64, SegmentationError> {
    check_lengths(pred, truth)?;
    if truth.is_empty() {
        return Ok(1.0);
    }
    // one-hot rows have unit norm, so a · â counts agreeing windows
    let agree = pred
        .labels()
        .iter()
        .zip(truth.labels())
        .filter(|(a, b)| a == b)
        .count() as f64;
    let norms = (pred.len() + truth.len()) as f64;
    Ok(2.0 * agree / norms)
}

/// Window IoU per class, averaged over classes that occur in either labeling.
pub fn iou(pred: &SegmentLabeling, truth: &SegmentLabeling) -> Result<f64, SegmentationError> {
    check_lengths(pred, truth)?;
    let mut inter = [0usize; ActionType::COUNT];
    let mut union = [0usize; ActionType::COUNT];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        if p == t {
            inter[p.index()] += 1;
            union[p.index()] += 1;
        } else {
            union[p.index()] += 1;
            union[t.index()] += 1;
        }
    }
    let present: Vec<f64> = (0..ActionType::COUNT)
        .filter(|&c| union[c] > 0)
        .map(|c| inter[c] as f64 / union[c] as f64)
        .collect();
    if present.is_empty() {
        return Ok(1.0);
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}
