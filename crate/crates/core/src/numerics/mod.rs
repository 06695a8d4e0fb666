//! Dense numerical substrate: matrices, affine layers with hand-written
//! backward passes, activations, seeded sampling and a finite-difference
//! gradient checker.

mod grad_check;
mod matrix;
mod rng;

pub use grad_check::{grad_check, numeric_gradient};
pub use matrix::{
    affine_backward, affine_forward, affine_sparse_backward, affine_sparse_forward,
    affine_tanh_forward, tanh_backward_in_place, tanh_in_place, DenseMatrix,
};
pub use rng::{mix64, SeededRng};

use crate::error::{Error, Result};

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Dimension("log_sum_exp of an empty vector".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("log_sum_exp input".into()));
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Log-softmax with max subtraction.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(logits)?;
    Ok(logits.iter().map(|v| v - lse).collect())
}

/// Softmax probabilities, computed through [`log_softmax`].
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(logits)?;
    Ok(logits.iter().map(|v| (v - lse).exp()).collect())
}

/// Reparameterized Gaussian draw `mu + sigma * eps`.
///
/// Returns the sample together with the standard-normal noise so callers can
/// push gradients back to `mu` and `sigma`.
pub fn sample_gaussian(
    mu: &[f64],
    sigma: &[f64],
    rng: &mut SeededRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu.len() != sigma.len() {
        return Err(Error::Shape(format!(
            "mean has length {} but scale has length {}",
            mu.len(),
            sigma.len()
        )));
    }
    if let Some(s) = sigma
        .iter()
        .find(|s| s.is_nan() || **s <= 0.0 || !s.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive and finite, got {s}"
        )));
    }
    let eps: Vec<f64> = (0..mu.len()).map(|_| rng.standard_normal()).collect();
    let z = mu
        .iter()
        .zip(sigma)
        .zip(&eps)
        .map(|((m, s), e)| m + s * e)
        .collect();
    Ok((z, eps))
}
