//! Finite-difference gradient checking for the training objectives.
//!
//! Central differences with a relative-error criterion: cheap, and precise
//! enough (error is O(h^2) for the smooth softplus objectives) to catch any
//! real mistake in an analytic gradient.

/// Central-difference gradient of `f` at `params` with step `h`.
pub fn finite_difference_grad(f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let original = work[i];
        work[i] = original + h;
        let plus = f(&work);
        work[i] = original - h;
        let minus = f(&work);
        work[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Worst relative disagreement between two gradients:
/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, 1)`.
///
/// The 1 in the denominator keeps near-zero partials from inflating the
/// error through rounding noise alone.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}
