use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::DomainSummary;
use super::{ndcg_at_k, recall_at_k};
use crate::error::{Error, Result};
use crate::ingest::MultiDomainDataset;
use crate::model::{decode_domain, infer_latent, top_k, InferenceOptions, PoeModel, UserFeedback};

/// Produces a score for every item of `target` from a user's visible
/// feedback in `sources`. Higher is better; ties go to the lower item id.
pub trait Scorer: Sync {
    fn score(
        &self,
        feedback: &UserFeedback<'_>,
        sources: &[usize],
        target: usize,
    ) -> Result<Vec<f64>>;
}

/// The POE model: fused posterior mean, then target-domain logits.
pub struct PoeScorer<'a> {
    pub model: &'a PoeModel,
    pub options: InferenceOptions,
}

impl<'a> PoeScorer<'a> {
    pub fn new(model: &'a PoeModel) -> Self {
        PoeScorer {
            model,
            options: InferenceOptions::default(),
        }
    }
}

impl Scorer for PoeScorer<'_> {
    fn score(
        &self,
        feedback: &UserFeedback<'_>,
        sources: &[usize],
        target: usize,
    ) -> Result<Vec<f64>> {
        let z = infer_latent(self.model, feedback, sources, self.options)?;
        decode_domain(self.model, target, &z)
    }
}

/// Unpersonalized ranking by training interaction counts.
pub struct PopularityScorer {
    counts: Vec<Vec<f64>>,
}

impl PopularityScorer {
    pub fn from_train(train: &MultiDomainDataset) -> Self {
        let counts = train
            .domains()
            .iter()
            .map(|d| d.item_counts().into_iter().map(|c| c as f64).collect())
            .collect();
        PopularityScorer { counts }
    }
}

impl Scorer for PopularityScorer {
    fn score(&self, _: &UserFeedback<'_>, _: &[usize], target: usize) -> Result<Vec<f64>> {
        self.counts
            .get(target)
            .cloned()
            .ok_or_else(|| Error::Shape(format!("no popularity counts for domain {target}")))
    }
}

/// A one-domain model trained on the concatenation of all domains. Inputs are
/// concatenated with per-domain offsets; target scores are the slice of the
/// logits belonging to the target domain.
pub struct ConcatScorer<'a> {
    pub model: &'a PoeModel,
    pub item_counts: Vec<usize>,
    pub options: InferenceOptions,
}

impl<'a> ConcatScorer<'a> {
    pub fn new(model: &'a PoeModel, item_counts: Vec<usize>) -> Result<Self> {
        if model.num_domains() != 1 || model.num_items(0) != item_counts.iter().sum::<usize>() {
            return Err(Error::Shape(format!(
                "concatenated model with {} items cannot serve domains of sizes {item_counts:?}",
                model.num_items(0)
            )));
        }
        Ok(ConcatScorer {
            model,
            item_counts,
            options: InferenceOptions::default(),
        })
    }

    fn offset(&self, d: usize) -> usize {
        self.item_counts[..d].iter().sum()
    }
}

impl Scorer for ConcatScorer<'_> {
    fn score(
        &self,
        feedback: &UserFeedback<'_>,
        sources: &[usize],
        target: usize,
    ) -> Result<Vec<f64>> {
        let mut joined = Vec::new();
        for &s in sources {
            let off = self.offset(s) as u32;
            joined.extend(feedback.row(s).unwrap_or(&[]).iter().map(|i| i + off));
        }
        joined.sort_unstable();
        let single = UserFeedback::new(vec![Some(&joined[..])]);
        let z = infer_latent(self.model, &single, &[0], self.options)?;
        let logits = decode_domain(self.model, 0, &z)?;
        let off = self.offset(target);
        Ok(logits[off..off + self.item_counts[target]].to_vec())
    }
}

/// Items of domain `t` by descending training count, ties by ascending id.
pub fn popularity_baseline(train: &MultiDomainDataset, t: usize) -> Result<Vec<u32>> {
    if t >= train.num_domains() {
        return Err(Error::Shape(format!("no domain {t}")));
    }
    let scores: Vec<f64> = train
        .domain(t)
        .item_counts()
        .into_iter()
        .map(|c| c as f64)
        .collect();
    top_k(&scores, &[], scores.len())
}

/// Which part of the source history the encoder sees in cross-domain mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceHistory {
    /// Fold-in input plus held-out part.
    #[default]
    Full,
    /// Fold-in input only.
    FoldIn,
}

/// What counts as ground truth in the target domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    /// The masked part; fold-in items are excluded from the ranking.
    #[default]
    HeldOut,
    /// The whole target history; nothing is excluded.
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossOptions {
    pub source_history: SourceHistory,
    pub ground_truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: usize,
    /// Aligned with the evaluation's K list.
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

/// Per-user results for one target domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainEval {
    pub target: usize,
    pub ks: Vec<usize>,
    pub users: Vec<UserMetrics>,
    /// Users without eligible input, ground truth, or enough rankable items.
    pub skipped: usize,
}

impl DomainEval {
    pub fn summary(&self) -> DomainSummary {
        let n = self.users.len();
        let mean = |pick: &dyn Fn(&UserMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                self.users.iter().map(pick).fold(0.0, |a, b| a + b) / n as f64
            }
        };
        DomainSummary {
            domain: self.target,
            n_users: n,
            n_skipped: self.skipped,
            recall: (0..self.ks.len()).map(|j| mean(&|u| u.recall[j])).collect(),
            ndcg: (0..self.ks.len()).map(|j| mean(&|u| u.ndcg[j])).collect(),
        }
    }
}

struct Case {
    user: usize,
    visible: Vec<Option<Vec<u32>>>,
    exclude: Vec<u32>,
    truth: Vec<u32>,
}

fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn check_pair(input: &MultiDomainDataset, held: &MultiDomainDataset) -> Result<()> {
    if input.num_users() != held.num_users()
        || input.item_counts_per_domain() != held.item_counts_per_domain()
    {
        return Err(Error::Shape(
            "fold-in input and held-out parts disagree".into(),
        ));
    }
    Ok(())
}

fn run(
    scorer: &dyn Scorer,
    cases: Vec<Case>,
    sources: &[usize],
    target: usize,
    item_count: usize,
    ks: &[usize],
    mut skipped: usize,
) -> Result<DomainEval> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument(
            "K list must be nonempty and positive".into(),
        ));
    }
    let max_k = *ks.iter().max().expect("nonempty");
    let results: Vec<Result<Option<UserMetrics>>> = cases
        .par_iter()
        .map(|case| {
            debug_assert!(case.truth.iter().all(|i| !case.exclude.contains(i)));
            let excluded = case.exclude.len();
            if item_count < excluded + max_k {
                return Ok(None);
            }
            let rows: Vec<Option<&[u32]>> = case.visible.iter().map(|r| r.as_deref()).collect();
            let feedback = UserFeedback::new(rows);
            let scores = scorer.score(&feedback, sources, target)?;
            if scores.len() != item_count {
                return Err(Error::Shape(format!(
                    "scorer returned {} scores for {item_count} items of domain {target}",
                    scores.len()
                )));
            }
            let ranked = top_k(&scores, &case.exclude, max_k)?;
            let recall = ks
                .iter()
                .map(|&k| recall_at_k(&ranked, &case.truth, k))
                .collect::<Result<Vec<_>>>()?;
            let ndcg = ks
                .iter()
                .map(|&k| ndcg_at_k(&ranked, &case.truth, k))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(UserMetrics {
                user: case.user,
                recall,
                ndcg,
            }))
        })
        .collect();
    let mut users = Vec::with_capacity(results.len());
    for r in results {
        match r? {
            Some(m) => users.push(m),
            None => skipped += 1,
        }
    }
    Ok(DomainEval {
        target,
        ks: ks.to_vec(),
        users,
        skipped,
    })
}

/// Encodes each test user's fold-in input of `t` and ranks the remaining
/// items of `t` against the held-out part.
pub fn eval_single_domain(
    scorer: &dyn Scorer,
    input: &MultiDomainDataset,
    held: &MultiDomainDataset,
    t: usize,
    ks: &[usize],
) -> Result<DomainEval> {
    check_pair(input, held)?;
    let mut cases = Vec::new();
    let mut skipped = 0;
    for u in 0..input.num_users() {
        let (inp, truth) = (input.domain(t).row(u), held.domain(t).row(u));
        if inp.is_empty() || truth.is_empty() {
            skipped += 1;
            continue;
        }
        let mut visible = vec![None; input.num_domains()];
        visible[t] = Some(inp.to_vec());
        cases.push(Case {
            user: u,
            visible,
            exclude: inp.to_vec(),
            truth: truth.to_vec(),
        });
    }
    run(
        scorer,
        cases,
        &[t],
        t,
        input.domain(t).num_items(),
        ks,
        skipped,
    )
}

/// Encodes only the source-domain history of users present in both domains
/// and ranks target items. With `s == t` this is the single-domain protocol.
pub fn eval_cross_domain(
    scorer: &dyn Scorer,
    input: &MultiDomainDataset,
    held: &MultiDomainDataset,
    s: usize,
    t: usize,
    ks: &[usize],
    opts: CrossOptions,
) -> Result<DomainEval> {
    if s == t {
        return eval_single_domain(scorer, input, held, t, ks);
    }
    check_pair(input, held)?;
    let mut cases = Vec::new();
    let mut skipped = 0;
    for u in 0..input.num_users() {
        let src = match opts.source_history {
            SourceHistory::Full => union(input.domain(s).row(u), held.domain(s).row(u)),
            SourceHistory::FoldIn => input.domain(s).row(u).to_vec(),
        };
        let (t_in, t_held) = (input.domain(t).row(u), held.domain(t).row(u));
        let (exclude, truth) = match opts.ground_truth {
            GroundTruth::HeldOut => (t_in.to_vec(), t_held.to_vec()),
            GroundTruth::Full => (Vec::new(), union(t_in, t_held)),
        };
        // intersection users only, and the same held-out users as the
        // single-domain protocol
        if src.is_empty() || t_in.is_empty() || t_held.is_empty() || truth.is_empty() {
            skipped += 1;
            continue;
        }
        let mut visible = vec![None; input.num_domains()];
        visible[s] = Some(src);
        cases.push(Case {
            user: u,
            visible,
            exclude,
            truth,
        });
    }
    run(
        scorer,
        cases,
        &[s],
        t,
        input.domain(t).num_items(),
        ks,
        skipped,
    )
}

/// Concatenated-input protocol: users present in every domain's fold-in
/// input, all domains visible, ranking over the target domain only.
pub fn eval_concatenated(
    scorer: &dyn Scorer,
    input: &MultiDomainDataset,
    held: &MultiDomainDataset,
    t: usize,
    ks: &[usize],
) -> Result<DomainEval> {
    check_pair(input, held)?;
    let all: Vec<usize> = (0..input.num_domains()).collect();
    let mut cases = Vec::new();
    let mut skipped = 0;
    for u in 0..input.num_users() {
        let truth = held.domain(t).row(u);
        if truth.is_empty() || all.iter().any(|&d| input.domain(d).row(u).is_empty()) {
            skipped += 1;
            continue;
        }
        let visible = all
            .iter()
            .map(|&d| Some(input.domain(d).row(u).to_vec()))
            .collect();
        cases.push(Case {
            user: u,
            visible,
            exclude: input.domain(t).row(u).to_vec(),
            truth: truth.to_vec(),
        });
    }
    run(
        scorer,
        cases,
        &all,
        t,
        input.domain(t).num_items(),
        ks,
        skipped,
    )
}
