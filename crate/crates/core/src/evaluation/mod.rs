//! Ranking metrics, the popularity and concatenation baselines, single- and
//! cross-domain evaluation protocols, and Pareto fronts over per-domain
//! metrics.

mod metrics;
mod pareto;
mod protocol;
mod report;

pub use metrics::{ndcg_at_k, recall_at_k};
pub use pareto::{dominates, pareto_csv, pareto_front, pareto_mask, ParetoPoint};
pub use protocol::{
    eval_concatenated, eval_cross_domain, eval_single_domain, popularity_baseline, ConcatScorer,
    CrossOptions, DomainEval, GroundTruth, PoeScorer, PopularityScorer, Scorer, SourceHistory,
    UserMetrics,
};
pub use report::{DomainSummary, EvalReport};
