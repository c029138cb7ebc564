use serde::{Deserialize, Serialize};

use crate::kernel::{
    log_softmax_backward, log_softmax_rows, softmax_cross_entropy, softmax_rows, KernelError,
    Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Per-term ceiling on the squared log-probability step.
    pub epsilon: f64,
    /// Weight of the smoothing term relative to cross-entropy.
    pub lambda: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            epsilon: 4.0,
            lambda: 0.15,
        }
    }
}

/// Truncated squared log-probability difference between adjacent unmasked
/// windows, averaged over window pairs and classes. Each term is
/// `min((log p_t - log p_{t-1})^2, epsilon)`; terms at the ceiling carry no
/// gradient. Returns the loss and its gradient with respect to `logits`.
pub fn smoothing_loss_grad(logits: &Tensor, mask: &[bool], epsilon: f64) -> (f64, Tensor) {
    let k = logits.cols();
    let mut grad = Tensor::zeros(logits.rows(), k);
    let pairs: Vec<usize> = (1..logits.rows())
        .filter(|&t| mask[t] && mask[t - 1])
        .collect();
    if pairs.is_empty() {
        return (0.0, grad);
    }
    let logp = log_softmax_rows(logits);
    let norm = 1.0 / (pairs.len() * k) as f64;
    let mut g_logp = Tensor::zeros(logits.rows(), k);
    let mut loss = 0.0;
    for &t in &pairs {
        for c in 0..k {
            let delta = logp.get(t, c) - logp.get(t - 1, c);
            let sq = delta * delta;
            if sq < epsilon {
                loss += sq;
                let g = 2.0 * delta * norm;
                g_logp.row_mut(t)[c] += g;
                g_logp.row_mut(t - 1)[c] -= g;
            } else {
                loss += epsilon;
            }
        }
    }
    let probs = softmax_rows(logits);
    let g = log_softmax_backward(&probs, &g_logp);
    for t in 0..logits.rows() {
        if mask[t] {
            grad.row_mut(t).copy_from_slice(g.row(t));
        }
    }
    (loss * norm, grad)
}

/// Smoothing loss over all rows of `logits`; 0 for fewer than two rows.
pub fn smoothing_loss(logits: &Tensor, epsilon: f64) -> f64 {
    smoothing_loss_grad(logits, &vec![true; logits.rows()], epsilon).0
}

/// Loss components of one segmentation forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationLoss {
    pub cross_entropy: f64,
    pub smoothing: f64,
    pub total: f64,
    pub grad_logits: Vec<Tensor>,
}

/// Sum over stages of `cross_entropy + lambda * smoothing`, with per-stage logit gradients.
pub fn segmentation_loss_grad(
    stage_logits: &[&Tensor],
    labels: &[usize],
    mask: &[bool],
    smoothing: SmoothingConfig,
) -> Result<SegmentationLoss, KernelError> {
    let mut out = SegmentationLoss {
        cross_entropy: 0.0,
        smoothing: 0.0,
        total: 0.0,
        grad_logits: Vec::new(),
    };
    for logits in stage_logits {
        let (ce, mut g) = softmax_cross_entropy(logits, labels, mask)?;
        let (sm, gs) = smoothing_loss_grad(logits, mask, smoothing.epsilon);
        let mut gs = gs;
        gs.scale(smoothing.lambda);
        g.add_assign(&gs);
        out.cross_entropy += ce;
        out.smoothing += sm;
        out.total += ce + smoothing.lambda * sm;
        out.grad_logits.push(g);
    }
    Ok(out)
}

pub fn segmentation_loss(
    stage_logits: &[Tensor],
    labels: &[usize],
    mask: &[bool],
    smoothing: SmoothingConfig,
) -> Result<f64, KernelError> {
    let refs: Vec<&Tensor> = stage_logits.iter().collect();
    Ok(segmentation_loss_grad(&refs, labels, mask, smoothing)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logits(rows: usize, seed: u64, scale: f64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tensor::zeros(rows, 4);
        for v in t.as_mut_slice() {
            *v = rng.gen_range(-scale..scale);
        }
        t
    }

    #[test]
    fn constant_logits_cost_nothing() {
        let row = [0.3, -1.0, 2.0, 0.1];
        let t = Tensor::from_rows(&[row; 6]).unwrap();
        assert_eq!(smoothing_loss(&t, 4.0), 0.0);
    }

    #[test]
    fn step_of_sqrt_two_epsilon_contributes_exactly_epsilon() {
        // Two windows, two classes. Window 0 has logits [0, 0]; window 1 has
        // [0, -b] with b chosen by bisection so that class 1's log-prob falls
        // by exactly sqrt(2 eps). That term clamps to eps; class 0's term is
        // its plain square.
        let eps = 4.0f64;
        let target = (2.0 * eps).sqrt();
        let drop = |b: f64| b + (1.0 + (-b).exp()).ln() - 2f64.ln();
        let (mut lo, mut hi) = (0.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if drop(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b = 0.5 * (lo + hi);
        let t = Tensor::from_rows(&[[0.0, 0.0], [0.0, -b]]).unwrap();
        let logp = log_softmax_rows(&t);
        let d1 = logp.get(1, 1) - logp.get(0, 1);
        assert!((d1.abs() - target).abs() < 1e-9);
        let d0 = logp.get(1, 0) - logp.get(0, 0);
        let (loss, grad) = smoothing_loss_grad(&t, &[true, true], eps);
        assert!((loss - (d0 * d0 + eps) / 2.0).abs() < 1e-12);
        // the clamped class contributes no gradient; only class 0's term does
        assert!(grad.is_finite());
    }

    #[test]
    fn loss_bounded_by_epsilon() {
        for seed in 0..20 {
            let t = random_logits(15, seed, 40.0);
            let l = smoothing_loss(&t, 4.0);
            assert!((0.0..=4.0).contains(&l), "{l}");
        }
    }

    #[test]
    fn invariant_to_per_window_shift() {
        let t = random_logits(10, 3, 3.0);
        let mut shifted = t.clone();
        for r in 0..shifted.rows() {
            let c = r as f64 * 1.7 - 4.0;
            for v in shifted.row_mut(r) {
                *v += c;
            }
        }
        assert!((smoothing_loss(&t, 4.0) - smoothing_loss(&shifted, 4.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_cost_stages_times_ln4() {
        let t = Tensor::zeros(9, 4);
        let labels = [0, 1, 2, 3, 0, 1, 2, 3, 0];
        let loss = segmentation_loss(
            &[t.clone(), t],
            &labels,
            &[true; 9],
            SmoothingConfig::default(),
        )
        .unwrap();
        assert!((loss - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_two_segment_prediction_is_near_zero() {
        // labels JJJJJTTTTT, confident logits matching them
        let labels = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let mut t = Tensor::filled(10, 4, -20.0);
        for (r, &l) in labels.iter().enumerate() {
            t.set(r, l, 20.0);
        }
        let cfg = SmoothingConfig::default();
        let parts = segmentation_loss_grad(&[&t], &labels, &[true; 10], cfg).unwrap();
        assert!(parts.cross_entropy < 1e-15);
        let runs = 2.0;
        let bound = cfg.epsilon * (runs - 1.0) * 4.0 / 10.0 * cfg.lambda;
        assert!(parts.total <= bound + 1e-12, "{} > {bound}", parts.total);
    }

    #[test]
    fn lambda_zero_reduces_to_summed_cross_entropy() {
        let a = random_logits(8, 1, 2.0);
        let b = random_logits(8, 2, 2.0);
        let labels = [0, 0, 1, 1, 2, 2, 3, 3];
        let mask = [true; 8];
        let cfg = SmoothingConfig {
            lambda: 0.0,
            ..SmoothingConfig::default()
        };
        let total = segmentation_loss(&[a.clone(), b.clone()], &labels, &mask, cfg).unwrap();
        let ce = softmax_cross_entropy(&a, &labels, &mask).unwrap().0
            + softmax_cross_entropy(&b, &labels, &mask).unwrap().0;
        assert!((total - ce).abs() < 1e-12);
    }

    #[test]
    fn masked_rows_do_not_contribute() {
        let t = random_logits(8, 9, 3.0);
        let mut mask = [true; 8];
        mask[6] = false;
        mask[7] = false;
        let (l, g) = smoothing_loss_grad(&t, &mask, 4.0);
        assert!((l - smoothing_loss(&t.slice_rows(0, 6), 4.0)).abs() < 1e-12);
        assert!(g.row(7).iter().all(|&v| v == 0.0));
    }
}
