use serde::{Deserialize, Serialize};

use super::MultiDomainDataset;
use crate::error::{Error, Result};
use crate::numerics::{mix64, SeededRng};

/// User-level and within-user split settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Fraction of users assigned to the training set.
    #[serde(default = "SplitSpec::default_train_fraction")]
    pub train_fraction: f64,
    /// Fraction of each test user's interactions kept as fold-in input.
    #[serde(default = "SplitSpec::default_fold_in_fraction")]
    pub fold_in_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    fn default_train_fraction() -> f64 {
        0.95
    }

    fn default_fold_in_fraction() -> f64 {
        0.80
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train_fraction", self.train_fraction),
            ("fold_in_fraction", self.fold_in_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Number of held-out items for a user with `n` interactions in a domain.
    pub fn held_out_count(&self, n: usize) -> usize {
        if n < 2 {
            return 0;
        }
        let raw = ((1.0 - self.fold_in_fraction) * n as f64 + 1e-9).floor() as usize;
        raw.clamp(1, n - 1)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: Self::default_train_fraction(),
            fold_in_fraction: Self::default_fold_in_fraction(),
            seed: 0,
        }
    }
}

/// Partitions users into train and test sets.
///
/// Users are ranked by a seeded hash of their row id; the highest-ranked
/// `floor(train_fraction * U)` users (at least one, at most `U - 1`) train.
pub fn split_users(
    ds: &MultiDomainDataset,
    spec: &SplitSpec,
) -> Result<(MultiDomainDataset, MultiDomainDataset)> {
    spec.validate()?;
    let n = ds.num_users();
    if n < 2 {
        return Err(Error::Split(format!("cannot split {n} users")));
    }
    let n_train = ((spec.train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut ranked: Vec<(u64, usize)> = (0..n).map(|u| (mix64(spec.seed, u as u64), u)).collect();
    ranked.sort_unstable();
    let mut train: Vec<usize> = ranked[..n_train].iter().map(|&(_, u)| u).collect();
    let mut test: Vec<usize> = ranked[n_train..].iter().map(|&(_, u)| u).collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select_users(&train)?, ds.select_users(&test)?))
}

/// Masks a seeded uniform sample of each user's interactions per domain.
///
/// Returns `(input_part, held_out_part)` over the same users and item spaces.
pub fn fold_in_split(
    test: &MultiDomainDataset,
    spec: &SplitSpec,
) -> Result<(MultiDomainDataset, MultiDomainDataset)> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed);
    let mut input_rows = Vec::with_capacity(test.num_domains());
    let mut held_rows = Vec::with_capacity(test.num_domains());
    for (d, dom) in test.domains().iter().enumerate() {
        let mut inp = Vec::with_capacity(test.num_users());
        let mut held = Vec::with_capacity(test.num_users());
        for u in 0..test.num_users() {
            let row = dom.row(u);
            let k = spec.held_out_count(row.len());
            let mut positions: Vec<usize> = (0..row.len()).collect();
            // keyed by the user key so the mask does not depend on row order
            let user_hash = test.user_keys()[u]
                .bytes()
                .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                    (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
                });
            root.substream(&[user_hash, d as u64])
                .shuffle(&mut positions);
            let mut mask = vec![false; row.len()];
            for &p in &positions[..k] {
                mask[p] = true;
            }
            let (mut h, mut i) = (Vec::with_capacity(k), Vec::with_capacity(row.len() - k));
            for (&c, &m) in row.iter().zip(&mask) {
                if m {
                    h.push(c)
                } else {
                    i.push(c)
                }
            }
            held.push(h);
            inp.push(i);
        }
        input_rows.push(inp);
        held_rows.push(held);
    }
    Ok((test.with_rows(input_rows)?, test.with_rows(held_rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_multidomain, RatingRecord};

    fn dataset(users: usize, items_per_user: usize) -> MultiDomainDataset {
        let records: Vec<_> = (0..users)
            .flat_map(|u| {
                (0..items_per_user)
                    .map(move |i| RatingRecord::new(format!("u{u:04}"), format!("i{i:03}"), 1.0, 0))
            })
            .collect();
        build_multidomain(&records, 1).unwrap()
    }

    #[test]
    fn ninety_five_percent_of_hundred() {
        let (train, test) = split_users(&dataset(100, 1), &SplitSpec::default()).unwrap();
        assert_eq!((train.num_users(), test.num_users()), (95, 5));
    }

    #[test]
    fn twenty_users_leave_one_test_user() {
        let (train, test) = split_users(&dataset(20, 1), &SplitSpec::default()).unwrap();
        assert_eq!((train.num_users(), test.num_users()), (19, 1));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = dataset(57, 2);
        let spec = SplitSpec {
            seed: 9,
            ..SplitSpec::default()
        };
        let (a_train, a_test) = split_users(&ds, &spec).unwrap();
        let (b_train, b_test) = split_users(&ds, &spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        for k in a_test.user_keys() {
            assert!(a_train.user_id(k).is_none());
        }
        assert_eq!(a_train.num_users() + a_test.num_users(), 57);
    }

    #[test]
    fn too_few_users() {
        assert!(matches!(
            split_users(&dataset(1, 1), &SplitSpec::default()),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn invalid_fractions_rejected() {
        let spec = SplitSpec {
            train_fraction: 1.0,
            ..SplitSpec::default()
        };
        assert!(split_users(&dataset(5, 1), &spec).is_err());
    }

    #[test]
    fn fold_in_counts() {
        let spec = SplitSpec::default();
        assert_eq!(spec.held_out_count(10), 2);
        assert_eq!(spec.held_out_count(1), 0);
        assert_eq!(spec.held_out_count(2), 1);
        assert_eq!(spec.held_out_count(4), 1);
        assert_eq!(spec.held_out_count(0), 0);

        let ds = dataset(3, 10);
        let (inp, held) = fold_in_split(&ds, &spec).unwrap();
        for u in 0..3 {
            assert_eq!(inp.domain(0).count(u), 8);
            assert_eq!(held.domain(0).count(u), 2);
        }
        let single = dataset(2, 1);
        let (inp, held) = fold_in_split(&single, &spec).unwrap();
        assert_eq!(inp.domain(0).count(0), 1);
        assert_eq!(held.domain(0).count(0), 0);
    }

    #[test]
    fn fold_in_is_deterministic() {
        let ds = dataset(4, 17);
        let spec = SplitSpec {
            seed: 3,
            ..SplitSpec::default()
        };
        assert_eq!(
            fold_in_split(&ds, &spec).unwrap(),
            fold_in_split(&ds, &spec).unwrap()
        );
    }
}
