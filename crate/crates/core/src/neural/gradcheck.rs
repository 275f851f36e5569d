use serde::Serialize;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub parameters: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with an absolute floor, so components where both
/// gradients vanish do not blow up. The floor sits above the roundoff of a
/// central difference on an O(1) loss.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Checks `f` (returning loss and analytic gradient) at `params` against
/// central finite differences with step `h`.
pub fn gradient_check<F>(mut f: F, params: &[f64], step: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(
        analytic.len(),
        params.len(),
        "gradient length must match parameters"
    );
    let mut probe = params.to_vec();
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let (plus, _) = f(&probe);
        probe[i] = orig - step;
        let (minus, _) = f(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        parameters: params.len(),
        tolerance,
        passed: worst.0 < tolerance,
    }
}
