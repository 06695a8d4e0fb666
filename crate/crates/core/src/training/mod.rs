//! Mini-batch training with Adam, KL annealing, and checkpointing.

mod adam;
mod checkpoint;
mod schedule;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointManifest, CheckpointMeta, TensorEntry,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use schedule::AnnealSchedule;

use crate::error::{Error, Result};
use crate::ingest::MultiDomainDataset;
use crate::model::{elbo, subsampled_objective, LossConfig, PoeModel, UserFeedback};
use crate::numerics::SeededRng;

/// Users per gradient chunk. Chunks are summed independently (possibly in
/// parallel) and then reduced in chunk order, so results do not depend on the
/// thread count.
const GRAD_CHUNK: usize = 8;

const STREAM_SHUFFLE: u64 = 1;
const STREAM_USER: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Joint-input ELBO only; users missing any domain are skipped.
    JointOnly,
    /// Joint ELBO plus one single-domain-input ELBO per present domain.
    #[default]
    Subsampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_batch_size")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "TrainConfig::default_anneal_cap")]
    pub anneal_cap: f64,
    #[serde(default = "TrainConfig::default_anneal_steps")]
    pub anneal_steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objective: Objective,
    pub loss: LossConfig,
}

impl TrainConfig {
    fn default_batch_size() -> usize {
        500
    }

    fn default_learning_rate() -> f64 {
        1e-3
    }

    fn default_anneal_cap() -> f64 {
        0.2
    }

    fn default_anneal_steps() -> u64 {
        200_000
    }

    pub fn new(epochs: usize, loss: LossConfig) -> Self {
        TrainConfig {
            batch_size: Self::default_batch_size(),
            epochs,
            learning_rate: Self::default_learning_rate(),
            anneal_cap: Self::default_anneal_cap(),
            anneal_steps: Self::default_anneal_steps(),
            seed: 0,
            objective: Objective::default(),
            loss,
        }
    }

    pub fn schedule(&self) -> AnnealSchedule {
        AnnealSchedule::new(self.anneal_cap, self.anneal_steps)
    }

    /// Collects every violated constraint.
    pub fn problems(&self, num_domains: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push("batch_size: must be positive".to_string());
        }
        if self.epochs == 0 {
            out.push("epochs: must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!(
                "learning_rate: must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.anneal_cap) {
            out.push(format!(
                "anneal_cap: must lie in [0, 1], got {}",
                self.anneal_cap
            ));
        }
        if self.anneal_steps == 0 {
            out.push("anneal_steps: must be positive".to_string());
        }
        if let Err(Error::Config(msg)) = self.loss.validate(num_domains) {
            out.extend(msg.split("; ").map(|m| format!("loss: {m}")));
        }
        out
    }

    pub fn validate(&self, num_domains: usize) -> Result<()> {
        let problems = self.problems(num_domains);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// One row of the loss trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Global optimizer step at the end of the epoch.
    pub step: u64,
    /// KL weight used by the epoch's last batch.
    pub beta: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<EpochStats>,
    pub steps: u64,
    /// Per domain, sum over steps of the L2 norm of the decoder gradient.
    pub decoder_grad_norms: Vec<f64>,
    pub users_per_epoch: usize,
}

impl TrainReport {
    /// Loss trace as `epoch,step,beta,mean_loss` CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,step,beta,mean_loss\n");
        for row in &self.trace {
            writeln!(
                out,
                "{},{},{},{}",
                row.epoch, row.step, row.beta, row.mean_loss
            )
            .unwrap();
        }
        out
    }
}

/// Loss of one user under the configured objective.
pub fn user_objective(
    model: &PoeModel,
    user: &UserFeedback<'_>,
    objective: Objective,
    cfg: &LossConfig,
    rng: &SeededRng,
    grads: Option<&mut PoeModel>,
) -> Result<f64> {
    match objective {
        Objective::Subsampled => subsampled_objective(model, user, cfg, rng, grads),
        Objective::JointOnly => {
            let present = user.present();
            elbo(model, user, &present, cfg, &mut rng.substream(&[0]), grads)
        }
    }
}

fn check_compatible(model: &PoeModel, data: &MultiDomainDataset) -> Result<()> {
    if model.num_domains() != data.num_domains() {
        return Err(Error::Shape(format!(
            "model has {} domains, dataset has {}",
            model.num_domains(),
            data.num_domains()
        )));
    }
    for d in 0..data.num_domains() {
        if model.num_items(d) != data.domain(d).num_items() {
            return Err(Error::Shape(format!(
                "domain {d}: model expects {} items, dataset has {}",
                model.num_items(d),
                data.domain(d).num_items()
            )));
        }
    }
    Ok(())
}

/// Users the objective is defined on.
pub fn eligible_users(data: &MultiDomainDataset, objective: Objective) -> Vec<usize> {
    match objective {
        Objective::Subsampled => (0..data.num_users())
            .filter(|&u| data.presence(u) != 0)
            .collect(),
        Objective::JointOnly => {
            let all: Vec<usize> = (0..data.num_domains()).collect();
            data.users_present_in(&all)
        }
    }
}

/// Trains `model` in place, starting the annealing schedule at `start_step`.
pub fn train_from(
    model: &mut PoeModel,
    data: &MultiDomainDataset,
    cfg: &TrainConfig,
    start_step: u64,
) -> Result<TrainReport> {
    cfg.validate(model.num_domains())?;
    check_compatible(model, data)?;
    let users = eligible_users(data, cfg.objective);
    if users.is_empty() {
        return Err(Error::EmptyDataset("no eligible training users".into()));
    }

    let root = SeededRng::new(cfg.seed);
    let schedule = cfg.schedule();
    let mut opt = Adam::new(model, cfg.learning_rate);
    let mut step = start_step;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut decoder_grad_norms = vec![0.0; model.num_domains()];
    let mut batch_grads = model.zeros_like();

    for epoch in 0..cfg.epochs {
        let mut order = users.clone();
        root.substream(&[STREAM_SHUFFLE, epoch as u64])
            .shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut beta = schedule.beta(step);

        for batch in order.chunks(cfg.batch_size) {
            beta = schedule.beta(step);
            let loss_cfg = LossConfig {
                beta,
                ..cfg.loss.clone()
            };
            let model_ref: &PoeModel = model;
            let partials: Vec<Result<(f64, PoeModel)>> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads = model_ref.zeros_like();
                    let mut loss = 0.0;
                    for &u in chunk {
                        let feedback = UserFeedback::from_dataset(data, u);
                        let rng = root.substream(&[STREAM_USER, epoch as u64, u as u64]);
                        let l = user_objective(
                            model_ref,
                            &feedback,
                            cfg.objective,
                            &loss_cfg,
                            &rng,
                            Some(&mut grads),
                        )
                        .map_err(|e| diagnose(e, epoch, step, &data.user_keys()[u]))?;
                        loss += l;
                    }
                    Ok((loss, grads))
                })
                .collect();

            batch_grads.fill_zero();
            let mut batch_loss = 0.0;
            for partial in partials {
                let (loss, grads) = partial?;
                batch_loss += loss;
                batch_grads.add_scaled(&grads, 1.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for p in batch_grads.params_mut() {
                for g in p.iter_mut() {
                    *g *= scale;
                }
            }
            for (d, norm) in decoder_grad_norms.iter_mut().enumerate() {
                *norm += batch_grads.decoder_norm(d);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "batch loss at epoch {}, step {step}",
                    epoch + 1
                )));
            }
            opt.step(model, &batch_grads);
            step += 1;
            epoch_loss += batch_loss;
        }
        trace.push(EpochStats {
            epoch: epoch + 1,
            step,
            beta,
            mean_loss: epoch_loss / users.len() as f64,
        });
    }
    Ok(TrainReport {
        trace,
        steps: step,
        decoder_grad_norms,
        users_per_epoch: users.len(),
    })
}

/// Trains `model` in place from step zero.
pub fn train(
    model: &mut PoeModel,
    data: &MultiDomainDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_from(model, data, cfg, 0)
}

fn diagnose(err: Error, epoch: usize, step: u64, user: &str) -> Error {
    match err {
        Error::NonFinite(what) => Error::NonFinite(format!(
            "{what} (epoch {}, step {step}, user {user:?})",
            epoch + 1
        )),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_multidomain, RatingRecord};
    use crate::model::ModelShape;

    fn toy_data() -> MultiDomainDataset {
        let mut records = Vec::new();
        let mut rng = SeededRng::new(3);
        for u in 0..40 {
            let group = u % 2;
            for i in 0..6 {
                if rng.bernoulli(if i % 2 == group { 0.8 } else { 0.1 }) {
                    records.push(RatingRecord::new(format!("u{u}"), format!("a{i}"), 1.0, 0));
                }
                if u % 5 != 0 && rng.bernoulli(if i % 2 == group { 0.7 } else { 0.1 }) {
                    records.push(RatingRecord::new(format!("u{u}"), format!("b{i}"), 1.0, 1));
                }
            }
            records.push(RatingRecord::new(
                format!("u{u}"),
                format!("a{group}"),
                1.0,
                0,
            ));
        }
        build_multidomain(&records, 2).unwrap()
    }

    fn toy_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 10,
            learning_rate: 1e-2,
            anneal_steps: 50,
            seed: 5,
            ..TrainConfig::new(epochs, LossConfig::uniform(2))
        }
    }

    #[test]
    fn loss_decreases_over_epochs() {
        let data = toy_data();
        let mut model =
            PoeModel::new(ModelShape::new(data.item_counts_per_domain(), 16, 4), 1).unwrap();
        let report = train(&mut model, &data, &toy_config(50)).unwrap();
        let first = report.trace.first().unwrap().mean_loss;
        let last = report.trace.last().unwrap().mean_loss;
        assert!(last < first, "first {first}, last {last}");
        assert!(report.trace.iter().all(|r| r.mean_loss.is_finite()));
        assert_eq!(report.steps, 200);
        assert_eq!(report.trace.last().unwrap().beta, 0.2);
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = toy_data();
        let shape = ModelShape::new(data.item_counts_per_domain(), 8, 3);
        let mut a = PoeModel::new(shape.clone(), 2).unwrap();
        let mut b = PoeModel::new(shape, 2).unwrap();
        let ra = train(&mut a, &data, &toy_config(3)).unwrap();
        let rb = train(&mut b, &data, &toy_config(3)).unwrap();
        assert_eq!(ra, rb);
        let bits = |m: &PoeModel| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_lambda_domain_gets_no_decoder_gradient() {
        let data = toy_data();
        let mut model =
            PoeModel::new(ModelShape::new(data.item_counts_per_domain(), 8, 3), 2).unwrap();
        let before = model.domain(1).dec_out.clone();
        let mut cfg = toy_config(2);
        cfg.loss.lambda = vec![1.0, 0.0];
        let report = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(report.decoder_grad_norms[1], 0.0);
        assert!(report.decoder_grad_norms[0] > 0.0);
        assert_eq!(model.domain(1).dec_out, before);
    }

    #[test]
    fn joint_only_skips_partial_users() {
        let data = toy_data();
        let full = eligible_users(&data, Objective::JointOnly).len();
        assert!(full < data.num_users());
        let mut model =
            PoeModel::new(ModelShape::new(data.item_counts_per_domain(), 8, 3), 2).unwrap();
        let mut cfg = toy_config(1);
        cfg.objective = Objective::JointOnly;
        let report = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(report.users_per_epoch, full);
    }

    #[test]
    fn config_problems_are_listed_per_field() {
        let mut cfg = toy_config(0);
        cfg.learning_rate = 0.0;
        cfg.batch_size = 0;
        let problems = cfg.problems(2);
        assert!(problems.iter().any(|p| p.starts_with("epochs")));
        assert!(problems.iter().any(|p| p.starts_with("learning_rate")));
        assert!(problems.iter().any(|p| p.starts_with("batch_size")));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let data = toy_data();
        let mut model = PoeModel::new(ModelShape::new(vec![3, 3], 8, 3), 2).unwrap();
        assert!(matches!(
            train(&mut model, &data, &toy_config(1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn trace_csv_header() {
        let data = toy_data();
        let mut model =
            PoeModel::new(ModelShape::new(data.item_counts_per_domain(), 8, 3), 2).unwrap();
        let report = train(&mut model, &data, &toy_config(2)).unwrap();
        let csv = report.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,step,beta,mean_loss"));
        assert_eq!(lines.count(), 2);
    }
}
