use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `point` with step `h`.
pub fn numeric_gradient<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at probe around coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Maximum relative error between `analytic` and a central-difference
/// estimate, using `max(1, |analytic|)` as the denominator.
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "{} analytic partials for {} coordinates",
            analytic.len(),
            point.len()
        )));
    }
    let numeric = numeric_gradient(f, point, h)?;
    Ok(numeric
        .iter()
        .zip(analytic)
        .map(|(n, a)| (n - a).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}
