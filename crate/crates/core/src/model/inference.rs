use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::objective::{decoder_forward, encoder_forward};
use super::{product_of_experts, GaussianPosterior, PoeModel, UserFeedback};
use crate::error::{Error, Result};

/// Switches for deterministic inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub normalize_input: bool,
    pub include_prior: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            normalize_input: true,
            include_prior: true,
        }
    }
}

/// Posterior `q(z | x_d)` of one domain's encoder, without dropout.
pub fn encode_domain(
    model: &PoeModel,
    d: usize,
    items: &[u32],
    normalize_input: bool,
) -> Result<GaussianPosterior> {
    let pass = encoder_forward(model, d, items, normalize_input, None)?;
    let variance = pass.log_sigma.iter().map(|s| (2.0 * s).exp()).collect();
    GaussianPosterior::new(pass.mean, variance)
}

/// Raw logits `f_theta_t(z)`.
pub fn decode_domain(model: &PoeModel, t: usize, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != model.latent_dim() {
        return Err(Error::Shape(format!(
            "latent of length {} for a model with k = {}",
            z.len(),
            model.latent_dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent vector".into()));
    }
    Ok(decoder_forward(model, t, z)?.logits)
}

/// Mean of the fused posterior over the given input domains.
pub fn infer_latent(
    model: &PoeModel,
    user: &UserFeedback<'_>,
    inputs: &[usize],
    opts: InferenceOptions,
) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "inference needs at least one input domain".into(),
        ));
    }
    let experts = inputs
        .iter()
        .map(|&d| {
            let items = user.row(d).ok_or_else(|| {
                Error::InvalidArgument(format!("input domain {d} is not present for this user"))
            })?;
            encode_domain(model, d, items, opts.normalize_input)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(product_of_experts(&experts, opts.include_prior)?.mean)
}

/// Indices of the `k` highest scores, skipping `exclude`; ties go to the lower
/// index.
pub fn top_k(scores: &[f64], exclude: &[u32], k: usize) -> Result<Vec<u32>> {
    let mut excluded = vec![false; scores.len()];
    for &i in exclude {
        if let Some(slot) = excluded.get_mut(i as usize) {
            *slot = true;
        }
    }
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|&i| !excluded[i as usize])
        .collect();
    if k > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "asked for {k} items but only {} are rankable",
            candidates.len()
        )));
    }
    let order = |a: &u32, b: &u32| -> Ordering {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(order);
    Ok(candidates)
}

/// Top-`k` items of domain `t` for latent `z`, excluding `exclude`.
pub fn recommend(
    model: &PoeModel,
    z: &[f64],
    t: usize,
    exclude: &[u32],
    k: usize,
) -> Result<Vec<u32>> {
    let logits = decode_domain(model, t, z)?;
    top_k(&logits, exclude, k)
}
