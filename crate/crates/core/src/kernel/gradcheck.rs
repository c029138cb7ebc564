/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor: gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Relative disagreement between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares `analytic` against central differences of `loss` around `params`
/// and returns the worst relative error.
///
/// `loss` receives a perturbed copy of the full parameter vector.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        params.len(),
        analytic.len(),
        "gradient length must match parameter count"
    );
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let plus = loss(&probe);
        probe[i] = orig - FD_STEP;
        let minus = loss(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
