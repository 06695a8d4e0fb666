use std::collections::{BTreeSet, HashMap};

use super::RatingRecord;
use crate::error::{Error, Result};

/// Presence masks are `u64`, so at most this many domains are supported.
pub const MAX_DOMAINS: usize = 64;

/// Binary user-item matrix for one domain. Row `u` lists the column ids of the
/// items user `u` interacted with, sorted and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    domain_id: usize,
    item_keys: Vec<String>,
    item_index: HashMap<String, u32>,
    rows: Vec<Vec<u32>>,
}

impl DomainDataset {
    pub fn new(domain_id: usize, item_keys: Vec<String>, rows: Vec<Vec<u32>>) -> Result<Self> {
        if item_keys.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "domain {domain_id} has no items"
            )));
        }
        let mut item_index = HashMap::with_capacity(item_keys.len());
        for (i, k) in item_keys.iter().enumerate() {
            if item_index.insert(k.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate item key {k:?} in domain {domain_id}"
                )));
            }
        }
        let n = item_keys.len() as u32;
        for (u, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "row {u} of domain {domain_id} is not sorted and unique"
                )));
            }
            if row.last().is_some_and(|&c| c >= n) {
                return Err(Error::Shape(format!(
                    "row {u} of domain {domain_id} references an item beyond {n}"
                )));
            }
        }
        Ok(DomainDataset {
            domain_id,
            item_keys,
            item_index,
            rows,
        })
    }

    pub fn domain_id(&self) -> usize {
        self.domain_id
    }

    pub fn num_items(&self) -> usize {
        self.item_keys.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn item_keys(&self) -> &[String] {
        &self.item_keys
    }

    pub fn item_id(&self, key: &str) -> Option<u32> {
        self.item_index.get(key).copied()
    }

    pub fn row(&self, user: usize) -> &[u32] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// `N_u^d`.
    pub fn count(&self, user: usize) -> usize {
        self.rows[user].len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Users with at least one interaction.
    pub fn active_users(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_empty()).count()
    }

    /// Interaction count per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items()];
        for row in &self.rows {
            for &i in row {
                counts[i as usize] += 1;
            }
        }
        counts
    }
}

/// D domains over one shared user row space.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiDomainDataset {
    user_keys: Vec<String>,
    user_index: HashMap<String, usize>,
    domains: Vec<DomainDataset>,
    presence: Vec<u64>,
}

impl MultiDomainDataset {
    pub fn new(user_keys: Vec<String>, domains: Vec<DomainDataset>) -> Result<Self> {
        if domains.is_empty() || domains.len() > MAX_DOMAINS {
            return Err(Error::InvalidArgument(format!(
                "{} domains (need 1..={MAX_DOMAINS})",
                domains.len()
            )));
        }
        let mut user_index = HashMap::with_capacity(user_keys.len());
        for (u, k) in user_keys.iter().enumerate() {
            if user_index.insert(k.clone(), u).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate user key {k:?}")));
            }
        }
        for (d, dom) in domains.iter().enumerate() {
            if dom.num_rows() != user_keys.len() {
                return Err(Error::Shape(format!(
                    "domain {d} has {} rows for {} users",
                    dom.num_rows(),
                    user_keys.len()
                )));
            }
        }
        let presence = (0..user_keys.len())
            .map(|u| {
                domains
                    .iter()
                    .enumerate()
                    .filter(|(_, dom)| dom.count(u) > 0)
                    .fold(0u64, |m, (d, _)| m | (1 << d))
            })
            .collect();
        Ok(MultiDomainDataset {
            user_keys,
            user_index,
            domains,
            presence,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_keys.len()
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn domain(&self, d: usize) -> &DomainDataset {
        &self.domains[d]
    }

    pub fn domains(&self) -> &[DomainDataset] {
        &self.domains
    }

    pub fn item_counts_per_domain(&self) -> Vec<usize> {
        self.domains.iter().map(DomainDataset::num_items).collect()
    }

    pub fn user_keys(&self) -> &[String] {
        &self.user_keys
    }

    pub fn user_id(&self, key: &str) -> Option<usize> {
        self.user_index.get(key).copied()
    }

    /// Bit `d` is set iff the user has an interaction in domain `d`.
    pub fn presence(&self, user: usize) -> u64 {
        self.presence[user]
    }

    pub fn is_present(&self, user: usize, d: usize) -> bool {
        self.presence[user] & (1 << d) != 0
    }

    pub fn present_domains(&self, user: usize) -> Vec<usize> {
        (0..self.num_domains())
            .filter(|&d| self.is_present(user, d))
            .collect()
    }

    /// Per-domain rows of one user; `None` where the domain is absent.
    pub fn user_rows(&self, user: usize) -> Vec<Option<&[u32]>> {
        self.domains
            .iter()
            .map(|dom| {
                let row = dom.row(user);
                (!row.is_empty()).then_some(row)
            })
            .collect()
    }

    /// Restriction to the given users (in the given order). Item spaces are
    /// unchanged.
    pub fn select_users(&self, users: &[usize]) -> Result<MultiDomainDataset> {
        let keys = users.iter().map(|&u| self.user_keys[u].clone()).collect();
        let domains = self
            .domains
            .iter()
            .map(|dom| {
                let rows = users.iter().map(|&u| dom.row(u).to_vec()).collect();
                DomainDataset::new(dom.domain_id, dom.item_keys.clone(), rows)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiDomainDataset::new(keys, domains)
    }

    /// Replaces the per-domain rows, keeping users and item spaces.
    pub fn with_rows(&self, rows: Vec<Vec<Vec<u32>>>) -> Result<MultiDomainDataset> {
        if rows.len() != self.num_domains() {
            return Err(Error::Shape(
                "row set count differs from domain count".into(),
            ));
        }
        let domains = self
            .domains
            .iter()
            .zip(rows)
            .map(|(dom, r)| DomainDataset::new(dom.domain_id, dom.item_keys.clone(), r))
            .collect::<Result<Vec<_>>>()?;
        MultiDomainDataset::new(self.user_keys.clone(), domains)
    }

    /// Users present in every listed domain.
    pub fn users_present_in(&self, domains: &[usize]) -> Vec<usize> {
        let mask = domains.iter().fold(0u64, |m, &d| m | (1 << d));
        (0..self.num_users())
            .filter(|&u| self.presence[u] & mask == mask)
            .collect()
    }

    /// Single-domain dataset whose item space is the disjoint union of all
    /// domains, restricted to users present in every domain. Item keys are
    /// prefixed with their domain id.
    pub fn concatenated(&self) -> Result<MultiDomainDataset> {
        let all: Vec<usize> = (0..self.num_domains()).collect();
        let users = self.users_present_in(&all);
        if users.is_empty() {
            return Err(Error::EmptyDataset(
                "no user is present in every domain".into(),
            ));
        }
        let offsets = self.concat_offsets();
        let item_keys = self
            .domains
            .iter()
            .flat_map(|dom| {
                dom.item_keys
                    .iter()
                    .map(move |k| format!("{}:{k}", dom.domain_id))
            })
            .collect();
        let rows = users
            .iter()
            .map(|&u| {
                self.domains
                    .iter()
                    .zip(&offsets)
                    .flat_map(|(dom, &off)| dom.row(u).iter().map(move |&i| i + off as u32))
                    .collect()
            })
            .collect();
        let keys = users.iter().map(|&u| self.user_keys[u].clone()).collect();
        MultiDomainDataset::new(keys, vec![DomainDataset::new(0, item_keys, rows)?])
    }

    /// Column offset of each domain inside [`Self::concatenated`].
    pub fn concat_offsets(&self) -> Vec<usize> {
        self.domains
            .iter()
            .scan(0, |acc, dom| {
                let off = *acc;
                *acc += dom.num_items();
                Some(off)
            })
            .collect()
    }

    /// Re-checks all structural invariants.
    pub fn validate(&self) -> Result<()> {
        for (u, &mask) in self.presence.iter().enumerate() {
            let recomputed = self
                .domains
                .iter()
                .enumerate()
                .filter(|(_, dom)| dom.count(u) > 0)
                .fold(0u64, |m, (d, _)| m | (1 << d));
            if recomputed != mask {
                return Err(Error::InvalidArgument(format!(
                    "presence mask of user {u} is stale"
                )));
            }
        }
        Ok(())
    }
}

/// Indexes binarized records into a [`MultiDomainDataset`].
///
/// Records are sorted by `(user_key, domain, item_key)` before ids are handed
/// out in order of first appearance, so the result does not depend on input
/// order. Duplicate `(user, item, domain)` triples collapse to one entry.
pub fn build_multidomain(
    records: &[RatingRecord],
    num_domains: usize,
) -> Result<MultiDomainDataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no records to index".into()));
    }
    if let Some(r) = records.iter().find(|r| r.domain_id >= num_domains) {
        return Err(Error::InvalidArgument(format!(
            "record with domain {} but only {num_domains} domains",
            r.domain_id
        )));
    }
    let mut sorted: Vec<&RatingRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.user_key, a.domain_id, &a.item_key).cmp(&(&b.user_key, b.domain_id, &b.item_key))
    });

    let mut user_keys: Vec<String> = Vec::new();
    let mut user_of: HashMap<&str, usize> = HashMap::new();
    let mut item_sets: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); num_domains];
    for r in &sorted {
        if !user_of.contains_key(r.user_key.as_str()) {
            user_of.insert(&r.user_key, user_keys.len());
            user_keys.push(r.user_key.clone());
        }
        item_sets[r.domain_id].insert(&r.item_key);
    }
    let item_maps: Vec<HashMap<&str, u32>> = item_sets
        .iter()
        .map(|s| s.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect())
        .collect();

    let mut rows = vec![vec![Vec::new(); user_keys.len()]; num_domains];
    for r in &sorted {
        let u = user_of[r.user_key.as_str()];
        rows[r.domain_id][u].push(item_maps[r.domain_id][r.item_key.as_str()]);
    }
    let domains = rows
        .into_iter()
        .enumerate()
        .map(|(d, mut dom_rows)| {
            for row in &mut dom_rows {
                row.sort_unstable();
                row.dedup();
            }
            let keys: Vec<String> = item_sets[d].iter().map(|k| k.to_string()).collect();
            if keys.is_empty() {
                return Err(Error::EmptyDataset(format!("domain {d} has no records")));
            }
            DomainDataset::new(d, keys, dom_rows)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiDomainDataset::new(user_keys, domains)
}
