use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw review before binarization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_key: String,
    pub item_key: String,
    pub rating: f64,
    pub domain_id: usize,
}

impl RatingRecord {
    pub fn new(
        user: impl Into<String>,
        item: impl Into<String>,
        rating: f64,
        domain_id: usize,
    ) -> Self {
        RatingRecord {
            user_key: user.into(),
            item_key: item.into(),
            rating,
            domain_id,
        }
    }
}

/// Keeps records rated at or above `threshold`, rewriting their rating to 1.
pub fn binarize<I>(records: I, threshold: f64) -> Result<Vec<RatingRecord>>
where
    I: IntoIterator<Item = RatingRecord>,
{
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "binarization threshold must be finite, got {threshold}"
        )));
    }
    Ok(records
        .into_iter()
        .filter(|r| r.rating >= threshold)
        .map(|mut r| {
            r.rating = 1.0;
            r
        })
        .collect())
}

/// Drops every item whose record count in its domain is below that domain's
/// threshold. Domains missing from `min_reviews` use a threshold of 1.
pub fn filter_items(
    records: Vec<RatingRecord>,
    min_reviews: &BTreeMap<usize, usize>,
    num_domains: usize,
) -> Result<Vec<RatingRecord>> {
    for (&d, &t) in min_reviews {
        if d >= num_domains {
            return Err(Error::Config(format!(
                "item threshold given for unknown domain {d} (have {num_domains})"
            )));
        }
        if t < 1 {
            return Err(Error::Config(format!(
                "item threshold for domain {d} must be at least 1"
            )));
        }
    }
    let mut counts: HashMap<(usize, &str), usize> = HashMap::new();
    for r in &records {
        *counts
            .entry((r.domain_id, r.item_key.as_str()))
            .or_default() += 1;
    }
    let keep: Vec<bool> = records
        .iter()
        .map(|r| {
            let threshold = min_reviews.get(&r.domain_id).copied().unwrap_or(1);
            counts[&(r.domain_id, r.item_key.as_str())] >= threshold
        })
        .collect();
    Ok(records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect())
}

/// How the user-minimum filter counts interactions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserFilterScope {
    /// A user survives iff their total count over all domains reaches the
    /// minimum.
    #[default]
    AcrossDomains,
    /// A user's records in domain `d` survive iff their count in `d` reaches
    /// the minimum.
    PerDomain,
}

/// Removes users with fewer than `min_interactions` records.
pub fn filter_users(
    records: Vec<RatingRecord>,
    min_interactions: usize,
    scope: UserFilterScope,
) -> Vec<RatingRecord> {
    if min_interactions == 0 {
        return records;
    }
    let mut counts: HashMap<(&str, Option<usize>), usize> = HashMap::new();
    let key = |r: &RatingRecord| match scope {
        UserFilterScope::AcrossDomains => None,
        UserFilterScope::PerDomain => Some(r.domain_id),
    };
    for r in &records {
        *counts.entry((r.user_key.as_str(), key(r))).or_default() += 1;
    }
    let keep: Vec<bool> = records
        .iter()
        .map(|r| counts[&(r.user_key.as_str(), key(r))] >= min_interactions)
        .collect();
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, i: &str, r: f64, d: usize) -> RatingRecord {
        RatingRecord::new(u, i, r, d)
    }

    #[test]
    fn binarize_threshold_boundary() {
        let out = binarize(
            vec![
                rec("a", "x", 3.5, 0),
                rec("a", "y", 3.0, 0),
                rec("a", "z", 5.0, 0),
            ],
            3.5,
        )
        .unwrap();
        let items: Vec<_> = out.iter().map(|r| r.item_key.as_str()).collect();
        assert_eq!(items, vec!["x", "z"]);
        assert!(out.iter().all(|r| r.rating == 1.0));
    }

    #[test]
    fn binarize_rejects_nan_threshold() {
        assert!(binarize(vec![], f64::NAN).is_err());
    }

    fn item_records(item: &str, n: usize, d: usize) -> Vec<RatingRecord> {
        (0..n)
            .map(|u| rec(&format!("u{u}"), item, 1.0, d))
            .collect()
    }

    #[test]
    fn item_threshold_boundaries() {
        let mut records = item_records("kept", 200, 0);
        records.extend(item_records("dropped", 199, 0));
        records.extend(item_records("single", 1, 1));
        let thresholds = BTreeMap::from([(0, 200), (1, 1)]);
        let out = filter_items(records, &thresholds, 2).unwrap();
        let count = |k: &str| out.iter().filter(|r| r.item_key == k).count();
        assert_eq!(count("kept"), 200);
        assert_eq!(count("dropped"), 0);
        assert_eq!(count("single"), 1);
    }

    #[test]
    fn item_threshold_unknown_domain() {
        let thresholds = BTreeMap::from([(3, 5)]);
        assert!(matches!(
            filter_items(vec![], &thresholds, 2),
            Err(Error::Config(_))
        ));
        let zero = BTreeMap::from([(0, 0)]);
        assert!(matches!(
            filter_items(vec![], &zero, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn user_minimum_boundaries() {
        let mut records: Vec<_> = (0..5)
            .map(|i| rec("five", &format!("i{i}"), 1.0, i % 2))
            .collect();
        records.extend((0..4).map(|i| rec("four", &format!("i{i}"), 1.0, 0)));
        let out = filter_users(records.clone(), 5, UserFilterScope::AcrossDomains);
        assert!(out.iter().all(|r| r.user_key == "five"));
        assert_eq!(out.len(), 5);
        assert_eq!(
            filter_users(records.clone(), 0, UserFilterScope::AcrossDomains).len(),
            9
        );
        // per domain, "five" has 3 + 2 and fails both
        assert_eq!(
            filter_users(records, 4, UserFilterScope::PerDomain).len(),
            4
        );
    }

    #[test]
    fn filters_are_idempotent() {
        let mut records = item_records("a", 3, 0);
        records.extend(item_records("b", 1, 0));
        records.push(rec("u0", "c", 1.0, 0));
        let t = BTreeMap::from([(0, 2)]);
        let once = filter_items(records, &t, 1).unwrap();
        let twice = filter_items(once.clone(), &t, 1).unwrap();
        assert_eq!(once, twice);
        let u1 = filter_users(once, 2, UserFilterScope::AcrossDomains);
        let u2 = filter_users(u1.clone(), 2, UserFilterScope::AcrossDomains);
        assert_eq!(u1, u2);
    }
}
