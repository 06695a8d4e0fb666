//! Synthetic multi-domain implicit feedback with a known latent structure.
//!
//! Every user draws a shared latent vector. Domain 0 uses it directly; every
//! other domain uses `rho * shared + sqrt(1 - rho^2) * noise`. Items carry
//! seeded embeddings and popularity offsets, and a user's interactions in a
//! domain are a Poisson-sized sample without replacement from the softmax of
//! their affinities. Optionally a fraction of users lose domain 1 entirely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DomainDataset, MultiDomainDataset};
use crate::numerics::{mix64, SeededRng};

const STREAM_ITEMS: u64 = 1;
const STREAM_USERS: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
const STREAM_MISSING: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    /// Item count per domain.
    pub n_items: Vec<usize>,
    pub latent_dim: usize,
    /// Poisson mean of interactions per user and domain.
    pub interactions_mean: f64,
    /// Cross-domain correlation of user latents, in `[0, 1]`.
    pub correlation: f64,
    #[serde(default)]
    pub missing_domain_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Multiplier on `latent . embedding / sqrt(latent_dim)`.
    #[serde(default = "SynthConfig::default_affinity_scale")]
    pub affinity_scale: f64,
    /// Standard deviation of per-item popularity offsets.
    #[serde(default = "SynthConfig::default_popularity_std")]
    pub popularity_std: f64,
    /// Reuse domain 0's item embeddings and offsets in every domain.
    #[serde(default)]
    pub share_item_embeddings: bool,
}

impl SynthConfig {
    fn default_affinity_scale() -> f64 {
        3.0
    }

    fn default_popularity_std() -> f64 {
        1.0
    }

    pub fn new(n_users: usize, n_items: Vec<usize>, correlation: f64, seed: u64) -> Self {
        SynthConfig {
            n_users,
            n_items,
            latent_dim: 8,
            interactions_mean: 20.0,
            correlation,
            missing_domain_fraction: 0.0,
            seed,
            affinity_scale: Self::default_affinity_scale(),
            popularity_std: Self::default_popularity_std(),
            share_item_embeddings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_users == 0 {
            problems.push("n_users must be positive".to_string());
        }
        if self.n_items.is_empty() || self.n_items.contains(&0) {
            problems.push("n_items must list a positive count per domain".to_string());
        }
        if self.latent_dim == 0 {
            problems.push("latent_dim must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            problems.push(format!(
                "correlation must lie in [0, 1], got {}",
                self.correlation
            ));
        }
        if !(0.0..1.0).contains(&self.missing_domain_fraction) {
            problems.push(format!(
                "missing_domain_fraction must lie in [0, 1), got {}",
                self.missing_domain_fraction
            ));
        }
        if self.missing_domain_fraction > 0.0 && self.n_items.len() < 2 {
            problems.push("missing_domain_fraction needs at least two domains".to_string());
        }
        if !(self.interactions_mean > 0.0 && self.interactions_mean.is_finite()) {
            problems.push("interactions_mean must be positive".to_string());
        }
        if !(self.affinity_scale.is_finite()
            && self.popularity_std >= 0.0
            && self.popularity_std.is_finite())
        {
            problems.push(
                "affinity_scale and popularity_std must be finite, popularity_std >= 0".to_string(),
            );
        }
        if self.share_item_embeddings && self.n_items.windows(2).any(|w| w[0] != w[1]) {
            problems.push("share_item_embeddings needs equal item counts".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        if let Some(&small) = self
            .n_items
            .iter()
            .find(|&&n| (n as f64) <= self.interactions_mean)
        {
            return Err(Error::InvalidArgument(format!(
                "infeasible: {small} items cannot supply a mean of {} interactions",
                self.interactions_mean
            )));
        }
        Ok(())
    }
}

/// Ground-truth generative parameters behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    /// `[domain][user]` latent vectors.
    pub user_latents: Vec<Vec<Vec<f64>>>,
    /// `[domain][item]` embeddings.
    pub item_embeddings: Vec<Vec<Vec<f64>>>,
    /// `[domain][item]` popularity offsets.
    pub item_bias: Vec<Vec<f64>>,
    pub affinity_scale: f64,
    /// Users whose domain 1 was erased.
    pub erased: Vec<bool>,
}

impl SynthTruth {
    /// Unnormalized log-probabilities of user `u` over the items of domain `d`.
    pub fn scores(&self, d: usize, u: usize) -> Vec<f64> {
        let z = &self.user_latents[d][u];
        let norm = self.affinity_scale / (z.len() as f64).sqrt();
        self.item_embeddings[d]
            .iter()
            .zip(&self.item_bias[d])
            .map(|(e, b)| norm * e.iter().zip(z).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<MultiDomainDataset> {
    generate_with_truth(cfg).map(|(ds, _)| ds)
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<(MultiDomainDataset, SynthTruth)> {
    cfg.validate()?;
    let root = SeededRng::new(cfg.seed);
    let num_domains = cfg.n_items.len();
    let g = cfg.latent_dim;

    let mut item_embeddings = Vec::with_capacity(num_domains);
    let mut item_bias = Vec::with_capacity(num_domains);
    for d in 0..num_domains {
        let source = if cfg.share_item_embeddings { 0 } else { d };
        let mut rng = root.substream(&[STREAM_ITEMS, source as u64]);
        let emb: Vec<Vec<f64>> = (0..cfg.n_items[d])
            .map(|_| (0..g).map(|_| rng.standard_normal()).collect())
            .collect();
        let bias: Vec<f64> = (0..cfg.n_items[d])
            .map(|_| cfg.popularity_std * rng.standard_normal())
            .collect();
        item_embeddings.push(emb);
        item_bias.push(bias);
    }

    let rho = cfg.correlation;
    let independent = (1.0 - rho * rho).max(0.0).sqrt();
    let mut user_latents = vec![Vec::with_capacity(cfg.n_users); num_domains];
    for u in 0..cfg.n_users {
        let mut rng = root.substream(&[STREAM_USERS, u as u64]);
        let shared: Vec<f64> = (0..g).map(|_| rng.standard_normal()).collect();
        user_latents[0].push(shared.clone());
        for lat in user_latents.iter_mut().skip(1) {
            let noise: Vec<f64> = (0..g).map(|_| rng.standard_normal()).collect();
            lat.push(
                shared
                    .iter()
                    .zip(&noise)
                    .map(|(s, n)| rho * s + independent * n)
                    .collect(),
            );
        }
    }

    let n_erased = (cfg.missing_domain_fraction * cfg.n_users as f64).floor() as usize;
    let mut ranked: Vec<(u64, usize)> = (0..cfg.n_users)
        .map(|u| (mix64(mix64(cfg.seed, STREAM_MISSING), u as u64), u))
        .collect();
    ranked.sort_unstable();
    let mut erased = vec![false; cfg.n_users];
    for &(_, u) in &ranked[..n_erased] {
        erased[u] = true;
    }

    let truth = SynthTruth {
        user_latents,
        item_embeddings,
        item_bias,
        affinity_scale: cfg.affinity_scale,
        erased,
    };

    let mut domains = Vec::with_capacity(num_domains);
    for d in 0..num_domains {
        let n_items = cfg.n_items[d];
        let rows: Vec<Vec<u32>> = (0..cfg.n_users)
            .map(|u| {
                if d == 1 && truth.erased[u] {
                    return Vec::new();
                }
                let mut rng = root.substream(&[STREAM_SAMPLE, u as u64, d as u64]);
                let n = (rng.poisson(cfg.interactions_mean) as usize).clamp(1, n_items);
                // Gumbel top-n is sampling without replacement from the softmax
                let mut keyed: Vec<(f64, u32)> = truth
                    .scores(d, u)
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| (s + rng.gumbel(), i as u32))
                    .collect();
                keyed.select_nth_unstable_by(n - 1, |a, b| b.0.total_cmp(&a.0));
                let mut row: Vec<u32> = keyed[..n].iter().map(|&(_, i)| i).collect();
                row.sort_unstable();
                row
            })
            .collect();
        let keys = (0..n_items).map(|i| format!("d{d}_i{i:05}")).collect();
        domains.push(DomainDataset::new(d, keys, rows)?);
    }
    let users = (0..cfg.n_users).map(|u| format!("u{u:07}")).collect();
    Ok((MultiDomainDataset::new(users, domains)?, truth))
}
