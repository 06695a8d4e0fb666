use serde::{Deserialize, Serialize};

use super::PoeModel;
use crate::error::{Error, Result};
use crate::ingest::MultiDomainDataset;
use crate::numerics::{
    affine_backward, affine_forward, affine_sparse_backward, affine_sparse_forward, log_sum_exp,
    tanh_backward_in_place, tanh_in_place, SeededRng,
};

/// Weights and switches of the (negative) ELBO.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// KL weight. During training this is overwritten by the annealing
    /// schedule at every step.
    #[serde(default)]
    pub beta: f64,
    /// Reconstruction weight per domain.
    pub lambda: Vec<f64>,
    #[serde(default = "LossConfig::default_dropout")]
    pub input_dropout: f64,
    /// Include the standard-normal prior expert in the product.
    #[serde(default = "default_true")]
    pub include_prior: bool,
    /// Monte-Carlo samples of `z` per ELBO evaluation.
    #[serde(default = "LossConfig::default_samples")]
    pub samples: usize,
    /// Count a single-domain user's sub-sampled term once instead of twice.
    #[serde(default)]
    pub dedup_single_domain: bool,
    /// L2-normalize encoder inputs.
    #[serde(default = "default_true")]
    pub normalize_input: bool,
}

fn default_true() -> bool {
    true
}

impl LossConfig {
    fn default_dropout() -> f64 {
        0.5
    }

    fn default_samples() -> usize {
        1
    }

    /// Equal domain weights, `beta = 0`, default dropout.
    pub fn uniform(num_domains: usize) -> Self {
        LossConfig {
            beta: 0.0,
            lambda: vec![1.0; num_domains],
            input_dropout: Self::default_dropout(),
            include_prior: true,
            samples: 1,
            dedup_single_domain: false,
            normalize_input: true,
        }
    }

    pub fn validate(&self, num_domains: usize) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            problems.push(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if self.lambda.len() != num_domains {
            problems.push(format!(
                "lambda has {} entries for {num_domains} domains",
                self.lambda.len()
            ));
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            problems.push("lambda entries must be finite and >= 0".into());
        }
        if !self.lambda.iter().any(|&l| l > 0.0) {
            problems.push("at least one lambda entry must be positive".into());
        }
        if !(0.0..1.0).contains(&self.input_dropout) {
            problems.push(format!(
                "input_dropout must lie in [0, 1), got {}",
                self.input_dropout
            ));
        }
        if self.samples == 0 {
            problems.push("samples must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// One user's feedback across domains: sorted item ids, `None` when absent.
#[derive(Clone, Debug, PartialEq)]
pub struct UserFeedback<'a> {
    rows: Vec<Option<&'a [u32]>>,
}

impl<'a> UserFeedback<'a> {
    pub fn new(rows: Vec<Option<&'a [u32]>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| r.filter(|items| !items.is_empty()))
            .collect();
        UserFeedback { rows }
    }

    pub fn from_dataset(ds: &'a MultiDomainDataset, user: usize) -> Self {
        UserFeedback::new(ds.user_rows(user))
    }

    pub fn num_domains(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, d: usize) -> Option<&'a [u32]> {
        self.rows.get(d).copied().flatten()
    }

    /// Domains with feedback (the reconstruction targets).
    pub fn present(&self) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&d| self.rows[d].is_some())
            .collect()
    }
}

pub(crate) struct EncoderPass {
    pub domain: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub hidden: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

/// Normalizes, optionally drops out, and encodes one domain's feedback.
pub(crate) fn encoder_forward(
    model: &PoeModel,
    d: usize,
    items: &[u32],
    normalize: bool,
    dropout: Option<(f64, &mut SeededRng)>,
) -> Result<EncoderPass> {
    if items.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "cannot encode an all-zero input for domain {d}"
        )));
    }
    if d >= model.num_domains() {
        return Err(Error::Shape(format!("model has no domain {d}")));
    }
    let base = if normalize {
        1.0 / (items.len() as f64).sqrt()
    } else {
        1.0
    };
    let (indices, values) = match dropout {
        Some((p, rng)) if p > 0.0 => {
            let keep_scale = base / (1.0 - p);
            let mut idx = Vec::with_capacity(items.len());
            for &i in items {
                if !rng.bernoulli(p) {
                    idx.push(i);
                }
            }
            let vals = vec![keep_scale; idx.len()];
            (idx, vals)
        }
        _ => (items.to_vec(), vec![base; items.len()]),
    };
    let net = model.domain(d);
    let mut hidden = affine_sparse_forward(
        &net.enc_hidden.weight,
        &net.enc_hidden.bias,
        &indices,
        &values,
    )?;
    tanh_in_place(&mut hidden);
    let out = affine_forward(&net.enc_out.weight, &net.enc_out.bias, &hidden)?;
    let k = model.latent_dim();
    Ok(EncoderPass {
        domain: d,
        indices,
        values,
        hidden,
        mean: out[..k].to_vec(),
        log_sigma: out[k..].to_vec(),
    })
}

fn encoder_backward(
    model: &PoeModel,
    pass: &EncoderPass,
    g_mean: &[f64],
    g_log_sigma: &[f64],
    grads: &mut PoeModel,
) {
    let net = model.domain(pass.domain);
    let gnet = grads.domain_mut(pass.domain);
    let g_out: Vec<f64> = g_mean.iter().chain(g_log_sigma).copied().collect();
    let mut g_hidden = vec![0.0; pass.hidden.len()];
    affine_backward(
        &net.enc_out.weight,
        &pass.hidden,
        &g_out,
        &mut gnet.enc_out.weight,
        &mut gnet.enc_out.bias,
        Some(&mut g_hidden),
    );
    tanh_backward_in_place(&mut g_hidden, &pass.hidden);
    affine_sparse_backward(
        &pass.indices,
        &pass.values,
        &g_hidden,
        &mut gnet.enc_hidden.weight,
        &mut gnet.enc_hidden.bias,
    );
}

pub(crate) struct DecoderPass {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

pub(crate) fn decoder_forward(model: &PoeModel, t: usize, z: &[f64]) -> Result<DecoderPass> {
    if t >= model.num_domains() {
        return Err(Error::Shape(format!("model has no domain {t}")));
    }
    let net = model.domain(t);
    let mut hidden = affine_forward(&net.dec_hidden.weight, &net.dec_hidden.bias, z)?;
    tanh_in_place(&mut hidden);
    let logits = affine_forward(&net.dec_out.weight, &net.dec_out.bias, &hidden)?;
    Ok(DecoderPass { hidden, logits })
}

/// `sum_{i in items} log softmax(logits)_i` for a sparse binary target.
fn sparse_log_likelihood(items: &[u32], logits: &[f64], lse: f64) -> f64 {
    items.iter().map(|&i| logits[i as usize]).sum::<f64>() - items.len() as f64 * lse
}

/// `sum_i x_i * log_softmax(logits)_i` for a dense binary vector `x`.
pub fn multinomial_log_likelihood(x: &[f64], logits: &[f64]) -> Result<f64> {
    if x.len() != logits.len() {
        return Err(Error::Shape(format!(
            "target of length {} with {} logits",
            x.len(),
            logits.len()
        )));
    }
    let lse = log_sum_exp(logits)?;
    Ok(x.iter().zip(logits).map(|(xi, l)| xi * (l - lse)).sum())
}

/// Negative ELBO of one user for the input subset `inputs`, reconstructing
/// every domain the user has feedback in.
///
/// Encoders of `inputs` are fused with the product of experts, `z` is drawn
/// by reparameterization, and the loss is
/// `sum_t -lambda_t log p(x_t | z) + beta * KL(q || N(0, I))`, averaged over
/// `cfg.samples` draws. With `grads`, parameter gradients of the loss are
/// added into it.
///
/// Draw order from `rng`: dropout masks for each input domain in the order
/// given, then `k` standard normals per sample.
pub fn elbo(
    model: &PoeModel,
    user: &UserFeedback<'_>,
    inputs: &[usize],
    cfg: &LossConfig,
    rng: &mut SeededRng,
    grads: Option<&mut PoeModel>,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "ELBO needs at least one input domain".into(),
        ));
    }
    if user.num_domains() != model.num_domains() {
        return Err(Error::Shape(format!(
            "feedback over {} domains for a {}-domain model",
            user.num_domains(),
            model.num_domains()
        )));
    }
    for (n, &d) in inputs.iter().enumerate() {
        if inputs[..n].contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "input domain {d} listed twice"
            )));
        }
        if user.row(d).is_none() {
            return Err(Error::InvalidArgument(format!(
                "input domain {d} is not present for this user"
            )));
        }
    }

    let k = model.latent_dim();
    let mut passes = Vec::with_capacity(inputs.len());
    for &d in inputs {
        let items = user.row(d).expect("checked above");
        passes.push(encoder_forward(
            model,
            d,
            items,
            cfg.normalize_input,
            Some((cfg.input_dropout, &mut *rng)),
        )?);
    }

    // fused precision, mean and variance
    let prior = if cfg.include_prior { 1.0 } else { 0.0 };
    let precisions: Vec<Vec<f64>> = passes
        .iter()
        .map(|p| p.log_sigma.iter().map(|s| (-2.0 * s).exp()).collect())
        .collect();
    let mut total_precision = vec![prior; k];
    let mut weighted = vec![0.0; k];
    for (p, tau) in passes.iter().zip(&precisions) {
        for j in 0..k {
            total_precision[j] += tau[j];
            weighted[j] += p.mean[j] * tau[j];
        }
    }
    let mean: Vec<f64> = weighted
        .iter()
        .zip(&total_precision)
        .map(|(w, p)| w / p)
        .collect();
    let variance: Vec<f64> = total_precision.iter().map(|p| 1.0 / p).collect();
    let sigma: Vec<f64> = variance.iter().map(|v| v.sqrt()).collect();

    let targets = user.present();
    let mut grads = grads;
    let scale = 1.0 / cfg.samples as f64;
    let mut g_mean = vec![0.0; k];
    let mut g_var = vec![0.0; k];
    let mut loss = 0.0;

    for _ in 0..cfg.samples {
        let eps: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
        let z: Vec<f64> = (0..k).map(|j| mean[j] + sigma[j] * eps[j]).collect();
        let mut g_z = vec![0.0; k];
        for &t in &targets {
            let weight = cfg.lambda[t];
            if weight == 0.0 {
                continue;
            }
            let items = user.row(t).expect("present");
            let pass = decoder_forward(model, t, &z)?;
            let lse = log_sum_exp(&pass.logits)?;
            loss -= scale * weight * sparse_log_likelihood(items, &pass.logits, lse);

            if let Some(g) = grads.as_deref_mut() {
                let n = items.len() as f64;
                let coef = scale * weight;
                let mut g_logits: Vec<f64> = pass
                    .logits
                    .iter()
                    .map(|l| coef * n * (l - lse).exp())
                    .collect();
                for &i in items {
                    g_logits[i as usize] -= coef;
                }
                let net = model.domain(t);
                let gnet = g.domain_mut(t);
                let mut g_hidden = vec![0.0; pass.hidden.len()];
                affine_backward(
                    &net.dec_out.weight,
                    &pass.hidden,
                    &g_logits,
                    &mut gnet.dec_out.weight,
                    &mut gnet.dec_out.bias,
                    Some(&mut g_hidden),
                );
                tanh_backward_in_place(&mut g_hidden, &pass.hidden);
                let mut g_zt = vec![0.0; k];
                affine_backward(
                    &net.dec_hidden.weight,
                    &z,
                    &g_hidden,
                    &mut gnet.dec_hidden.weight,
                    &mut gnet.dec_hidden.bias,
                    Some(&mut g_zt),
                );
                for j in 0..k {
                    g_z[j] += g_zt[j];
                }
            }
        }
        for j in 0..k {
            g_mean[j] += g_z[j];
            // dz/dV = eps / (2 sigma)
            g_var[j] += g_z[j] * eps[j] / (2.0 * sigma[j]);
        }
    }

    let kl: f64 = 0.5
        * (0..k)
            .map(|j| variance[j] + mean[j] * mean[j] - 1.0 - variance[j].ln())
            .sum::<f64>();
    loss += cfg.beta * kl;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("ELBO for inputs {inputs:?}")));
    }

    if let Some(g) = grads {
        for j in 0..k {
            g_mean[j] += cfg.beta * mean[j];
            g_var[j] += cfg.beta * 0.5 * (1.0 - 1.0 / variance[j]);
        }
        for (pass, tau) in passes.iter().zip(&precisions) {
            let mut gm = vec![0.0; k];
            let mut gs = vec![0.0; k];
            for j in 0..k {
                let p = total_precision[j];
                gm[j] = g_mean[j] * tau[j] / p;
                let g_tau = g_mean[j] * (pass.mean[j] - mean[j]) / p - g_var[j] / (p * p);
                gs[j] = -2.0 * tau[j] * g_tau;
            }
            encoder_backward(model, pass, &gm, &gs, g);
        }
    }
    Ok(loss)
}

/// Sum of the joint-input ELBO and one single-domain-input ELBO per present
/// domain; every term reconstructs all present domains.
///
/// Term `0` (joint) draws from `rng.substream(&[0])`, the term for domain `d`
/// from `rng.substream(&[1 + d])`.
pub fn subsampled_objective(
    model: &PoeModel,
    user: &UserFeedback<'_>,
    cfg: &LossConfig,
    rng: &SeededRng,
    mut grads: Option<&mut PoeModel>,
) -> Result<f64> {
    let present = user.present();
    if present.is_empty() {
        return Err(Error::InvalidArgument(
            "user has no feedback in any domain".into(),
        ));
    }
    let mut loss = elbo(
        model,
        user,
        &present,
        cfg,
        &mut rng.substream(&[0]),
        grads.as_deref_mut(),
    )?;
    if present.len() == 1 && cfg.dedup_single_domain {
        return Ok(loss);
    }
    for &d in &present {
        loss += elbo(
            model,
            user,
            &[d],
            cfg,
            &mut rng.substream(&[1 + d as u64]),
            grads.as_deref_mut(),
        )?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelShape;
    use crate::numerics::grad_check;

    fn toy_model(items: Vec<usize>, seed: u64) -> PoeModel {
        let mut m = PoeModel::new(ModelShape::new(items, 8, 3), seed).unwrap();
        // non-zero biases so their gradients are exercised too
        let mut rng = SeededRng::new(seed ^ 0xabc);
        for p in m.params_mut() {
            for v in p.iter_mut() {
                *v += 0.1 * rng.standard_normal();
            }
        }
        m
    }

    #[test]
    fn log_likelihood_hand_cases() {
        assert_eq!(
            multinomial_log_likelihood(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
        let logits = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
        let ll = multinomial_log_likelihood(&[1.0, 0.0, 1.0], &logits).unwrap();
        assert!((ll - (0.5f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        assert!((ll + 2.0794).abs() < 1e-4);
        let ll = multinomial_log_likelihood(&[1.0; 4], &[0.0; 4]).unwrap();
        assert!((ll - 4.0 * 0.25f64.ln()).abs() < 1e-12);
        assert!(multinomial_log_likelihood(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_decoder_gives_uniform_closed_form() {
        let mut m = toy_model(vec![6, 5], 3);
        for d in 0..2 {
            let net = m.domain_mut(d);
            net.dec_out.weight.as_mut_slice().fill(0.0);
            net.dec_out.bias.fill(0.0);
        }
        let rows: [&[u32]; 2] = [&[0, 2, 5], &[1, 4]];
        let user = UserFeedback::new(vec![Some(rows[0]), Some(rows[1])]);
        let cfg = LossConfig {
            lambda: vec![1.5, 0.5],
            ..LossConfig::uniform(2)
        };
        let loss = elbo(&m, &user, &[0], &cfg, &mut SeededRng::new(1), None).unwrap();
        let expected = -(1.5 * 3.0 * (1.0f64 / 6.0).ln() + 0.5 * 2.0 * (1.0f64 / 5.0).ln());
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_and_absent_domains_rejected() {
        let m = toy_model(vec![6, 5], 3);
        let user = UserFeedback::new(vec![Some(&[1u32][..]), None]);
        let cfg = LossConfig::uniform(2);
        let mut rng = SeededRng::new(0);
        assert!(elbo(&m, &user, &[], &cfg, &mut rng, None).is_err());
        assert!(elbo(&m, &user, &[1], &cfg, &mut rng, None).is_err());
    }

    #[test]
    fn elbo_gradients_all_input_subsets() {
        let m = toy_model(vec![6, 5], 11);
        let rows: [&[u32]; 2] = [&[0, 3, 4], &[1, 2]];
        let users = [
            UserFeedback::new(vec![Some(rows[0]), Some(rows[1])]),
            UserFeedback::new(vec![Some(rows[0]), None]),
            UserFeedback::new(vec![None, Some(rows[1])]),
        ];
        let cfg = LossConfig {
            beta: 0.3,
            lambda: vec![1.0, 0.7],
            input_dropout: 0.25,
            samples: 2,
            ..LossConfig::uniform(2)
        };
        for user in &users {
            let present = user.present();
            let mut subsets: Vec<Vec<usize>> = present.iter().map(|&d| vec![d]).collect();
            if present.len() > 1 {
                subsets.push(present.clone());
            }
            for inputs in subsets {
                let mut g = m.zeros_like();
                elbo(
                    &m,
                    user,
                    &inputs,
                    &cfg,
                    &mut SeededRng::new(5),
                    Some(&mut g),
                )
                .unwrap();
                let f = |p: &[f64]| {
                    let mut probe = m.clone();
                    probe.assign_flat(p).unwrap();
                    elbo(&probe, user, &inputs, &cfg, &mut SeededRng::new(5), None).unwrap()
                };
                let err = grad_check(f, &m.flatten(), &g.flatten(), 1e-5).unwrap();
                assert!(err < 1e-4, "inputs {inputs:?}: relative error {err}");
            }
        }
    }

    #[test]
    fn subsampled_counts_terms() {
        let m = toy_model(vec![6, 5], 2);
        let rows: [&[u32]; 2] = [&[0, 1], &[2]];
        let cfg = LossConfig::uniform(2);
        let rng = SeededRng::new(8);

        let both = UserFeedback::new(vec![Some(rows[0]), Some(rows[1])]);
        let total = subsampled_objective(&m, &both, &cfg, &rng, None).unwrap();
        let terms = elbo(&m, &both, &[0, 1], &cfg, &mut rng.substream(&[0]), None).unwrap()
            + elbo(&m, &both, &[0], &cfg, &mut rng.substream(&[1]), None).unwrap()
            + elbo(&m, &both, &[1], &cfg, &mut rng.substream(&[2]), None).unwrap();
        assert!((total - terms).abs() < 1e-12);

        // single domain: joint and single terms use different substreams but
        // the same input set
        let one = UserFeedback::new(vec![Some(rows[0]), None]);
        let cfg_nodrop = LossConfig {
            input_dropout: 0.0,
            ..cfg.clone()
        };
        let det = subsampled_objective(&m, &one, &cfg_nodrop, &rng, None).unwrap();
        let joint = elbo(&m, &one, &[0], &cfg_nodrop, &mut rng.substream(&[0]), None).unwrap();
        let single = elbo(&m, &one, &[0], &cfg_nodrop, &mut rng.substream(&[1]), None).unwrap();
        assert!((det - joint - single).abs() < 1e-12);
        let dedup = LossConfig {
            dedup_single_domain: true,
            ..cfg_nodrop
        };
        let once = subsampled_objective(&m, &one, &dedup, &rng, None).unwrap();
        assert!((once - joint).abs() < 1e-12);
    }

    #[test]
    fn subsampled_gradients() {
        let m = toy_model(vec![6, 5], 21);
        let rows: [&[u32]; 2] = [&[1, 5], &[0, 3, 4]];
        let user = UserFeedback::new(vec![Some(rows[0]), Some(rows[1])]);
        let cfg = LossConfig {
            beta: 0.2,
            ..LossConfig::uniform(2)
        };
        let rng = SeededRng::new(4);
        let mut g = m.zeros_like();
        subsampled_objective(&m, &user, &cfg, &rng, Some(&mut g)).unwrap();
        let f = |p: &[f64]| {
            let mut probe = m.clone();
            probe.assign_flat(p).unwrap();
            subsampled_objective(&probe, &user, &cfg, &rng, None).unwrap()
        };
        let err = grad_check(f, &m.flatten(), &g.flatten(), 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_lambda_leaves_decoder_gradient_zero() {
        let m = toy_model(vec![6, 5], 2);
        let rows: [&[u32]; 2] = [&[0, 1], &[2]];
        let user = UserFeedback::new(vec![Some(rows[0]), Some(rows[1])]);
        let cfg = LossConfig {
            lambda: vec![1.0, 0.0],
            ..LossConfig::uniform(2)
        };
        let mut g = m.zeros_like();
        subsampled_objective(&m, &user, &cfg, &SeededRng::new(1), Some(&mut g)).unwrap();
        assert_eq!(g.decoder_norm(1), 0.0);
        assert!(g.decoder_norm(0) > 0.0);
    }

    #[test]
    fn config_validation_lists_problems() {
        let cfg = LossConfig {
            beta: -1.0,
            lambda: vec![0.0],
            input_dropout: 1.0,
            samples: 0,
            ..LossConfig::uniform(1)
        };
        let Err(Error::Config(msg)) = cfg.validate(2) else {
            panic!("expected config error");
        };
        for needle in [
            "beta",
            "lambda has 1",
            "positive",
            "input_dropout",
            "samples",
        ] {
            assert!(msg.contains(needle), "{msg}");
        }
    }
}
