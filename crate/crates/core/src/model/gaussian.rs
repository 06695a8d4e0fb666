use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal Gaussian `N(mean, diag(variance))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(Error::Shape(format!(
                "mean of length {} with variance of length {}",
                mean.len(),
                variance.len()
            )));
        }
        if let Some(v) = variance
            .iter()
            .find(|v| v.is_nan() || **v <= 0.0 || !v.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive, got {v}"
            )));
        }
        Ok(GaussianPosterior { mean, variance })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianPosterior {
            mean: vec![0.0; dim],
            variance: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Vec<f64> {
        self.variance.iter().map(|v| 1.0 / v).collect()
    }
}

/// Product of Gaussian experts, renormalized.
///
/// Precisions add and the mean is precision-weighted. With `include_prior`
/// the standard-normal prior expert joins the product.
pub fn product_of_experts(
    experts: &[GaussianPosterior],
    include_prior: bool,
) -> Result<GaussianPosterior> {
    let dim = match (experts.first(), include_prior) {
        (Some(e), _) => e.dim(),
        (None, true) => {
            return Err(Error::InvalidArgument(
                "dimension unknown for an empty expert list".into(),
            ))
        }
        (None, false) => {
            return Err(Error::InvalidArgument(
                "empty expert list without the prior expert".into(),
            ))
        }
    };
    let prior = if include_prior { 1.0 } else { 0.0 };
    let mut precision = vec![prior; dim];
    let mut weighted = vec![0.0; dim];
    for e in experts {
        if e.dim() != dim {
            return Err(Error::Shape(format!(
                "experts of dimension {} and {dim}",
                e.dim()
            )));
        }
        for j in 0..dim {
            let v = e.variance[j];
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "variance must be positive, got {v}"
                )));
            }
            precision[j] += 1.0 / v;
            weighted[j] += e.mean[j] / v;
        }
    }
    let mean = weighted
        .iter()
        .zip(&precision)
        .map(|(w, p)| w / p)
        .collect();
    let variance = precision.iter().map(|p| 1.0 / p).collect();
    Ok(GaussianPosterior { mean, variance })
}

/// `KL(q || N(0, I)) = 0.5 * sum(V + mu^2 - 1 - ln V)`.
pub fn kl_to_standard_normal(q: &GaussianPosterior) -> Result<f64> {
    let mut kl = 0.0;
    for (m, v) in q.mean.iter().zip(&q.variance) {
        if v.is_nan() || *v <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive, got {v}"
            )));
        }
        kl += v + m * m - 1.0 - v.ln();
    }
    Ok(0.5 * kl)
}
