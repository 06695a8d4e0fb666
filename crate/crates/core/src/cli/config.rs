use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{GroundTruth, SourceHistory};
use crate::ingest::{SplitSpec, UserFilterScope};
use crate::synthgen::SynthConfig;
use crate::training::TrainConfig;

/// One JSON document describing an experiment. Command-line flags override
/// individual fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub prepare: PrepareConfig,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub inputs: Option<Vec<PathBuf>>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareConfig {
    /// Ratings at or above this value become positive interactions.
    #[serde(default = "PrepareConfig::default_rating_threshold")]
    pub rating_threshold: f64,
    /// Minimum reviews per item, by domain index; absent domains keep all.
    #[serde(default)]
    pub min_item_reviews: BTreeMap<usize, usize>,
    #[serde(default = "PrepareConfig::default_min_user")]
    pub min_user_interactions: usize,
    #[serde(default)]
    pub user_filter: UserFilterScope,
    /// Display names for the summary table.
    #[serde(default)]
    pub domain_names: Vec<String>,
}

impl PrepareConfig {
    fn default_rating_threshold() -> f64 {
        3.5
    }

    fn default_min_user() -> usize {
        5
    }
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            rating_threshold: Self::default_rating_threshold(),
            min_item_reviews: BTreeMap::new(),
            min_user_interactions: Self::default_min_user(),
            user_filter: UserFilterScope::default(),
            domain_names: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "ModelConfig::default_hidden")]
    pub hidden: usize,
    #[serde(default = "ModelConfig::default_latent")]
    pub latent: usize,
}

impl ModelConfig {
    fn default_hidden() -> usize {
        600
    }

    fn default_latent() -> usize {
        200
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: Self::default_hidden(),
            latent: Self::default_latent(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "EvalConfig::default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub source_history: SourceHistory,
    #[serde(default)]
    pub target_ground_truth: GroundTruth,
}

impl EvalConfig {
    fn default_ks() -> Vec<usize> {
        vec![10, 50]
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: Self::default_ks(),
            source_history: SourceHistory::default(),
            target_ground_truth: GroundTruth::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every violated constraint, prefixed with its field path.
    pub fn problems(&self, num_domains: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(Error::Config(m)) = self.split.validate() {
            out.push(format!("split.{m}"));
        }
        if self.model.hidden == 0 {
            out.push("model.hidden: must be positive".into());
        }
        if self.model.latent == 0 {
            out.push("model.latent: must be positive".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            out.push("eval.ks: must be a nonempty list of positive integers".into());
        }
        let p = &self.prepare;
        if !p.rating_threshold.is_finite() {
            out.push("prepare.rating_threshold: must be finite".into());
        }
        for (d, t) in &p.min_item_reviews {
            if *t == 0 {
                out.push(format!("prepare.min_item_reviews.{d}: must be at least 1"));
            }
        }
        if let (Some(train), Some(d)) = (&self.train, num_domains) {
            out.extend(train.problems(d).into_iter().map(|m| format!("train.{m}")));
        }
        out
    }

    pub fn validate(&self, num_domains: Option<usize>) -> Result<()> {
        let problems = self.problems(num_domains);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{flag}: cannot parse {t:?}")))
        })
        .collect()
}
