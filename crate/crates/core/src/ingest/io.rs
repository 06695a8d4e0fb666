use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DomainDataset, MultiDomainDataset, RatingRecord};
use crate::error::{Error, Result};

/// Per-domain counts in the dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub domain_id: usize,
    pub num_items: usize,
    pub num_users: usize,
    pub num_interactions: usize,
    pub density: f64,
}

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_domains: usize,
    pub num_users: usize,
    pub domains: Vec<DomainStats>,
    /// Free-form provenance (thresholds, seeds, generator settings).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl DatasetManifest {
    pub fn describe(ds: &MultiDomainDataset, metadata: serde_json::Value) -> Self {
        let domains = ds
            .domains()
            .iter()
            .map(|dom| {
                let nnz = dom.nnz();
                let cells = (ds.num_users() * dom.num_items()).max(1);
                DomainStats {
                    domain_id: dom.domain_id(),
                    num_items: dom.num_items(),
                    num_users: dom.active_users(),
                    num_interactions: nnz,
                    density: nnz as f64 / cells as f64,
                }
            })
            .collect();
        DatasetManifest {
            num_domains: ds.num_domains(),
            num_users: ds.num_users(),
            domains,
            metadata,
        }
    }
}

/// Reads `user<TAB>item<TAB>rating` lines (no header) for one domain.
pub fn read_tsv(path: &Path, domain_id: usize) -> Result<Vec<RatingRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("rating {:?} is not a number", fields[2])))?;
        if !rating.is_finite() {
            return Err(parse_err("rating is not finite".into()));
        }
        out.push(RatingRecord::new(fields[0], fields[1], rating, domain_id));
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn write_index(path: &Path, keys: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for (i, k) in keys.iter().enumerate() {
        writeln!(w, "{i}\t{k}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_index(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut keys = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let (id, key) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected id<TAB>key".into(),
        })?;
        if id.parse::<usize>().ok() != Some(n) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("ids must be dense and ordered, found {id:?}"),
            });
        }
        keys.push(key.to_string());
    }
    Ok(keys)
}

/// Writes a dataset directory: `manifest.json`, `users.tsv`, and per domain
/// `items_<d>.tsv` plus the coordinate-format matrix `domain_<d>.mtx`.
pub fn write_dataset_dir(
    ds: &MultiDomainDataset,
    dir: &Path,
    metadata: serde_json::Value,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest::describe(ds, metadata);
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    write_index(&dir.join("users.tsv"), ds.user_keys())?;
    for (d, dom) in ds.domains().iter().enumerate() {
        write_index(&dir.join(format!("items_{d}.tsv")), dom.item_keys())?;
        let path = dir.join(format!("domain_{d}.mtx"));
        let mut w = create(&path)?;
        let io = |e| Error::io(&path, e);
        writeln!(w, "{} {} {}", ds.num_users(), dom.num_items(), dom.nnz()).map_err(io)?;
        for (u, row) in dom.rows().iter().enumerate() {
            for c in row {
                writeln!(w, "{u} {c}").map_err(|e| Error::io(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(manifest)
}

fn read_matrix(path: &Path, users: usize, items: usize) -> Result<Vec<Vec<u32>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header: Vec<usize> = lines
        .next()
        .ok_or_else(|| perr(1, "missing header".into()))?
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| perr(1, format!("bad header token {t:?}")))
        })
        .collect::<Result<_>>()?;
    if header.len() != 3 || header[0] != users || header[1] != items {
        return Err(perr(
            1,
            format!("header {header:?} does not match {users} users x {items} items"),
        ));
    }
    let mut rows = vec![Vec::new(); users];
    let mut nnz = 0;
    for (n, line) in lines.enumerate() {
        let mut it = line.split_whitespace();
        let (Some(r), Some(c), None) = (it.next(), it.next(), it.next()) else {
            return Err(perr(n + 2, "expected `row col`".into()));
        };
        let r: usize = r.parse().map_err(|_| perr(n + 2, "bad row".into()))?;
        let c: u32 = c.parse().map_err(|_| perr(n + 2, "bad column".into()))?;
        if r >= users || c as usize >= items {
            return Err(perr(n + 2, format!("entry ({r}, {c}) out of bounds")));
        }
        rows[r].push(c);
        nnz += 1;
    }
    if nnz != header[2] {
        return Err(perr(
            1,
            format!("header declares {} entries, found {nnz}", header[2]),
        ));
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    Ok(rows)
}

/// Loads a directory written by [`write_dataset_dir`].
pub fn read_dataset_dir(dir: &Path) -> Result<(MultiDomainDataset, DatasetManifest)> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let users = read_index(&dir.join("users.tsv"))?;
    if users.len() != manifest.num_users {
        return Err(Error::Shape(format!(
            "manifest lists {} users but users.tsv has {}",
            manifest.num_users,
            users.len()
        )));
    }
    let domains = (0..manifest.num_domains)
        .map(|d| {
            let keys = read_index(&dir.join(format!("items_{d}.tsv")))?;
            let rows = read_matrix(
                &dir.join(format!("domain_{d}.mtx")),
                users.len(),
                keys.len(),
            )?;
            DomainDataset::new(d, keys, rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((MultiDomainDataset::new(users, domains)?, manifest))
}
