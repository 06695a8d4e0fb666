use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Mean metrics of one domain; vectors are aligned with the report's K list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub domain: usize,
    pub n_users: usize,
    pub n_skipped: usize,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

/// Results of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Free-form run label, e.g. the domain weights of the checkpoint.
    pub label: String,
    /// `single`, `cross`, `baseline-popularity` or `baseline-concat`.
    pub mode: String,
    #[serde(default)]
    pub source: Option<usize>,
    pub ks: Vec<usize>,
    pub domains: Vec<DomainSummary>,
}

impl EvalReport {
    /// Metric value for `domain`, `metric` in {`recall`, `ndcg`} and `k`.
    pub fn value(&self, domain: usize, metric: &str, k: usize) -> Option<f64> {
        let j = self.ks.iter().position(|&x| x == k)?;
        let d = self.domains.iter().find(|s| s.domain == domain)?;
        match metric {
            "recall" => d.recall.get(j).copied(),
            "ndcg" => d.ndcg.get(j).copied(),
            _ => None,
        }
    }

    /// `setting,domain,metric,K,value,n_users` rows.
    pub fn to_csv(&self) -> String {
        let setting = if self.label.is_empty() {
            self.mode.clone()
        } else {
            self.label.clone()
        };
        let mut out = String::from("setting,domain,metric,K,value,n_users\n");
        for d in &self.domains {
            for (j, k) in self.ks.iter().enumerate() {
                writeln!(
                    out,
                    "{setting},{},recall,{k},{},{}",
                    d.domain, d.recall[j], d.n_users
                )
                .unwrap();
                writeln!(
                    out,
                    "{setting},{},ndcg,{k},{},{}",
                    d.domain, d.ndcg[j], d.n_users
                )
                .unwrap();
            }
        }
        out
    }
}
