use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{parse_list, RunConfig};
use super::{
    EvalArgs, EvalMode, GroundTruthArg, ObjectiveArg, ParetoArgs, PrepareArgs, SourceHistoryArg,
    SplitArgs, SynthArgs, TrainArgs, UserFilterArg,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    eval_concatenated, eval_cross_domain, eval_single_domain, pareto_csv, ConcatScorer,
    CrossOptions, DomainEval, DomainSummary, EvalReport, GroundTruth, ParetoPoint, PoeScorer,
    PopularityScorer, Scorer, SourceHistory,
};
use crate::ingest::{
    binarize, build_multidomain, filter_items, filter_users, fold_in_split, read_dataset_dir,
    read_tsv, split_users, write_dataset_dir, DatasetManifest, DomainDataset, MultiDomainDataset,
    UserFilterScope, MAX_DOMAINS,
};
use crate::model::{LossConfig, ModelShape, PoeModel};
use crate::synthgen::{generate, SynthConfig};
use crate::training::{
    load_checkpoint, save_checkpoint, train, CheckpointMeta, Objective, TrainConfig,
};

const TRAIN_DIR: &str = "train";
const INPUT_DIR: &str = "test_input";
const HELDOUT_DIR: &str = "test_heldout";

fn required(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| Error::Config(format!("paths.{name}: required (or pass --{name})")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn apply_split(cfg: &mut RunConfig, a: &SplitArgs) {
    if let Some(s) = a.seed {
        cfg.split.seed = s;
    }
    if let Some(f) = a.train_fraction {
        cfg.split.train_fraction = f;
    }
    if let Some(f) = a.fold_in_fraction {
        cfg.split.fold_in_fraction = f;
    }
}

/// Keeps only `ids` (dataset domain indices), renumbered in the given order.
pub fn project_domains(ds: &MultiDomainDataset, ids: &[usize]) -> Result<MultiDomainDataset> {
    let domains = ids
        .iter()
        .enumerate()
        .map(|(m, &d)| {
            if d >= ds.num_domains() {
                return Err(Error::Shape(format!(
                    "domain {d}: not in dataset ({} domains)",
                    ds.num_domains()
                )));
            }
            let dom = ds.domain(d);
            DomainDataset::new(m, dom.item_keys().to_vec(), dom.rows().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    MultiDomainDataset::new(ds.user_keys().to_vec(), domains)
}

fn summary_table(
    full: &MultiDomainDataset,
    names: &[String],
    thresholds: &[Option<usize>],
) -> String {
    let stats = DatasetManifest::describe(full, serde_json::Value::Null);
    let mut out = String::from(
        "| Category | Item threshold | # of users | # of domain users | # of items | # of interactions | Density |\n\
         |---|---|---|---|---|---|---|\n",
    );
    for s in &stats.domains {
        let name = names
            .get(s.domain_id)
            .cloned()
            .unwrap_or_else(|| format!("domain {}", s.domain_id));
        let threshold = thresholds
            .get(s.domain_id)
            .copied()
            .flatten()
            .map_or_else(|| "-".to_string(), |t| t.to_string());
        writeln!(
            out,
            "| {name} | {threshold} | {} | {} | {} | {} | {:.2}% |",
            stats.num_users,
            s.num_users,
            s.num_items,
            s.num_interactions,
            100.0 * s.density
        )
        .unwrap();
    }
    out
}

/// Splits `full` and writes the train, fold-in input and held-out parts.
fn write_prepared(
    out: &Path,
    full: &MultiDomainDataset,
    cfg: &RunConfig,
    mut metadata: serde_json::Value,
) -> Result<()> {
    let (train_set, test) = split_users(full, &cfg.split)?;
    let (input, held) = fold_in_split(&test, &cfg.split)?;
    metadata["split"] = serde_json::to_value(cfg.split)?;
    metadata["train_users"] = json!(train_set.num_users());
    metadata["test_users"] = json!(test.num_users());
    let manifest = DatasetManifest::describe(full, metadata.clone());
    write_dataset_dir(&train_set, &out.join(TRAIN_DIR), metadata.clone())?;
    write_dataset_dir(&input, &out.join(INPUT_DIR), metadata.clone())?;
    write_dataset_dir(&held, &out.join(HELDOUT_DIR), metadata)?;
    write_text(
        &out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )
}

/// Reads the three parts of a prepared dataset directory.
fn read_prepared(root: &Path) -> Result<[MultiDomainDataset; 3]> {
    let (train_set, _) = read_dataset_dir(&root.join(TRAIN_DIR))?;
    let (input, _) = read_dataset_dir(&root.join(INPUT_DIR))?;
    let (held, _) = read_dataset_dir(&root.join(HELDOUT_DIR))?;
    Ok([train_set, input, held])
}

pub fn cmd_prepare(a: &PrepareArgs) -> Result<String> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    apply_split(&mut cfg, &a.split);
    let p = &mut cfg.prepare;
    if let Some(t) = a.rating_threshold {
        p.rating_threshold = t;
    }
    if let Some(list) = &a.min_item_reviews {
        p.min_item_reviews = parse_list::<usize>("--min-item-reviews", list)?
            .into_iter()
            .enumerate()
            .collect();
    }
    if let Some(m) = a.min_user_interactions {
        p.min_user_interactions = m;
    }
    if let Some(f) = a.user_filter {
        p.user_filter = match f {
            UserFilterArg::AcrossDomains => UserFilterScope::AcrossDomains,
            UserFilterArg::PerDomain => UserFilterScope::PerDomain,
        };
    }
    if let Some(names) = &a.names {
        p.domain_names = names.split(',').map(|s| s.trim().to_string()).collect();
    }
    let inputs = if a.inputs.is_empty() {
        cfg.paths.inputs.clone().unwrap_or_default()
    } else {
        a.inputs.clone()
    };
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let mut problems = cfg.problems(None);
    if inputs.is_empty() {
        problems.push("paths.inputs: at least one TSV is required (or pass --input)".into());
    }
    if inputs.len() > MAX_DOMAINS {
        problems.push(format!(
            "paths.inputs: at most {MAX_DOMAINS} domains are supported"
        ));
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }

    let d = inputs.len();
    let mut records = Vec::new();
    for (domain, path) in inputs.iter().enumerate() {
        records.extend(read_tsv(path, domain)?);
    }
    let p = &cfg.prepare;
    let records = binarize(records, p.rating_threshold)?;
    let records = filter_items(records, &p.min_item_reviews, d)?;
    let records = filter_users(records, p.min_user_interactions, p.user_filter);
    let full = build_multidomain(&records, d)?;

    let metadata = json!({
        "source": "prepare",
        "inputs": inputs
            .iter()
            .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect::<Vec<_>>(),
        "prepare": p,
    });
    write_prepared(&out, &full, &cfg, metadata)?;
    let thresholds: Vec<Option<usize>> = (0..d)
        .map(|i| p.min_item_reviews.get(&i).copied())
        .collect();
    Ok(summary_table(&full, &p.domain_names, &thresholds))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    apply_split(&mut cfg, &a.split);
    let items = a
        .items
        .as_deref()
        .map(|s| parse_list::<usize>("--items", s))
        .transpose()?;
    let mut synth = match (cfg.synth.take(), a.users, items.clone()) {
        (Some(s), _, _) => s,
        (None, Some(u), Some(i)) => SynthConfig::new(u, i, 0.0, 0),
        (None, _, _) => {
            return Err(Error::Config(
                "synth: provide a synth section in the config or both --users and --items".into(),
            ))
        }
    };
    if let Some(u) = a.users {
        synth.n_users = u;
    }
    if let Some(i) = items {
        synth.n_items = i;
    }
    if let Some(r) = a.correlation {
        synth.correlation = r;
    }
    if let Some(m) = a.missing_domain_fraction {
        synth.missing_domain_fraction = m;
    }
    if let Some(k) = a.latent_dim {
        synth.latent_dim = k;
    }
    if let Some(m) = a.interactions_mean {
        synth.interactions_mean = m;
    }
    if let Some(s) = a.affinity_scale {
        synth.affinity_scale = s;
    }
    if let Some(s) = a.popularity_std {
        synth.popularity_std = s;
    }
    if let Some(s) = a.split.seed {
        synth.seed = s;
    }
    let out = required(&a.out, &cfg.paths.out, "out")?;
    cfg.validate(None)?;
    synth.validate()?;

    let full = generate(&synth)?;
    let metadata = json!({"source": "synth", "synth": synth});
    write_prepared(&out, &full, &cfg, metadata)?;
    cfg.synth = Some(synth);
    let names: Vec<String> = Vec::new();
    Ok(summary_table(
        &full,
        &names,
        &vec![None; full.num_domains()],
    ))
}

fn lambda_label(lambda: &[f64]) -> String {
    let parts: Vec<String> = lambda.iter().map(|l| l.to_string()).collect();
    format!("lambda={}", parts.join(":"))
}

pub fn cmd_train(a: &TrainArgs) -> Result<String> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let data = required(&a.data, &cfg.paths.data, "data")?;
    let out = required(&a.out, &cfg.paths.out, "out")?;
    if let Some(h) = a.hidden {
        cfg.model.hidden = h;
    }
    if let Some(k) = a.latent {
        cfg.model.latent = k;
    }

    let (full_train, _) = read_dataset_dir(&data.join(TRAIN_DIR))?;
    let dataset_domains = full_train.num_domains();
    let (view, domain_ids, concatenated) = if let Some(d) = a.only_domain {
        (project_domains(&full_train, &[d])?, vec![d], false)
    } else if a.concat {
        (
            full_train.concatenated()?,
            (0..dataset_domains).collect(),
            true,
        )
    } else {
        let ids: Vec<usize> = (0..dataset_domains).collect();
        (full_train, ids, false)
    };
    let d = view.num_domains();

    let mut tc = match cfg.train.take() {
        Some(t) => t,
        None => {
            let epochs = a.epochs.ok_or_else(|| {
                Error::Config(
                    "train.epochs: required (set it in the config or pass --epochs)".into(),
                )
            })?;
            TrainConfig::new(epochs, LossConfig::uniform(d))
        }
    };
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        tc.learning_rate = lr;
    }
    if let Some(c) = a.anneal_cap {
        tc.anneal_cap = c;
    }
    if let Some(s) = a.anneal_steps {
        tc.anneal_steps = s;
    }
    if let Some(p) = a.input_dropout {
        tc.loss.input_dropout = p;
    }
    if let Some(s) = a.seed {
        tc.seed = s;
    }
    if let Some(o) = a.objective {
        tc.objective = match o {
            ObjectiveArg::JointOnly => Objective::JointOnly,
            ObjectiveArg::Subsampled => Objective::Subsampled,
        };
    }
    if a.no_prior {
        tc.loss.include_prior = false;
    }
    if a.dedup_single_domain {
        tc.loss.dedup_single_domain = true;
    }
    if let Some(l) = &a.lambda {
        tc.loss.lambda = parse_list("--lambda", l)?;
    }
    // a per-dataset-domain lambda is narrowed to the single-domain view
    if d == 1 && tc.loss.lambda.len() == dataset_domains && dataset_domains > 1 {
        tc.loss.lambda = match a.only_domain {
            Some(only) => vec![tc.loss.lambda[only]],
            None => vec![1.0],
        };
    }
    cfg.train = Some(tc);
    cfg.validate(Some(d))?;
    let tc = cfg.train.as_ref().expect("set above");

    let shape = ModelShape::new(
        view.item_counts_per_domain(),
        cfg.model.hidden,
        cfg.model.latent,
    );
    let mut model = PoeModel::new(shape, tc.seed)?;
    let report = train(&mut model, &view, tc)?;

    let meta = CheckpointMeta {
        seed: tc.seed,
        step: report.steps,
        domain_ids: domain_ids.clone(),
        concatenated,
    };
    save_checkpoint(&model, &out.join("checkpoint"), &meta)?;
    write_text(&out.join("loss.csv"), &report.trace_csv())?;
    let diagnostics = json!({
        "label": lambda_label(&tc.loss.lambda),
        "steps": report.steps,
        "users_per_epoch": report.users_per_epoch,
        "domain_ids": domain_ids,
        "decoder_grad_norms": report.decoder_grad_norms,
        "zero_reconstruction_gradient": report
            .decoder_grad_norms
            .iter()
            .map(|&n| n == 0.0)
            .collect::<Vec<_>>(),
    });
    write_text(
        &out.join("diagnostics.json"),
        &(serde_json::to_string_pretty(&diagnostics)? + "\n"),
    )?;
    let record = RunConfig {
        paths: Default::default(),
        ..cfg.clone()
    };
    write_text(
        &out.join("config.json"),
        &(serde_json::to_string_pretty(&record)? + "\n"),
    )?;

    let last = report.trace.last().expect("epochs > 0");
    Ok(format!(
        "trained {} epochs ({} steps, {} users); final mean loss {}\n",
        last.epoch, report.steps, report.users_per_epoch, last.mean_loss
    ))
}

/// Lambda label recorded next to a checkpoint by `train`, if any.
fn recorded_label(checkpoint: &Path) -> Option<String> {
    let path = checkpoint.parent()?.join("diagnostics.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
    v.get("label")?.as_str().map(str::to_string)
}

fn check_shapes(
    model: &PoeModel,
    ids: &[usize],
    concatenated: bool,
    data: &MultiDomainDataset,
) -> Result<()> {
    for &d in ids {
        if d >= data.num_domains() {
            return Err(Error::Shape(format!(
                "domain {d}: checkpoint refers to it but the dataset has {} domains",
                data.num_domains()
            )));
        }
    }
    if concatenated {
        let total: usize = ids.iter().map(|&d| data.domain(d).num_items()).sum();
        if model.num_domains() != 1 || model.num_items(0) != total {
            return Err(Error::Shape(format!(
                "domain {ids:?}: concatenated checkpoint expects {} items, dataset has {total}",
                model.num_items(0)
            )));
        }
        return Ok(());
    }
    if model.num_domains() != ids.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} domains but lists {} domain ids",
            model.num_domains(),
            ids.len()
        )));
    }
    for (m, &d) in ids.iter().enumerate() {
        if model.num_items(m) != data.domain(d).num_items() {
            return Err(Error::Shape(format!(
                "domain {d}: checkpoint expects {} items, dataset has {}",
                model.num_items(m),
                data.domain(d).num_items()
            )));
        }
    }
    Ok(())
}

fn position(ids: &[usize], d: usize, role: &str) -> Result<usize> {
    ids.iter().position(|&x| x == d).ok_or_else(|| {
        Error::Shape(format!(
            "domain {d}: {role} domain is not covered by the checkpoint {ids:?}"
        ))
    })
}

fn summarize(eval: &DomainEval, dataset_domain: usize) -> DomainSummary {
    DomainSummary {
        domain: dataset_domain,
        ..eval.summary()
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let data = required(&a.data, &cfg.paths.data, "data")?;
    let out = required(&a.out, &cfg.paths.out, "out")?;
    if let Some(k) = &a.k {
        cfg.eval.ks = parse_list("--k", k)?;
    }
    if let Some(g) = a.target_ground_truth {
        cfg.eval.target_ground_truth = match g {
            GroundTruthArg::HeldOut => GroundTruth::HeldOut,
            GroundTruthArg::Full => GroundTruth::Full,
        };
    }
    if let Some(s) = a.source_history {
        cfg.eval.source_history = match s {
            SourceHistoryArg::Full => SourceHistory::Full,
            SourceHistoryArg::FoldIn => SourceHistory::FoldIn,
        };
    }
    cfg.validate(None)?;
    let ks = cfg.eval.ks.clone();
    let opts = CrossOptions {
        source_history: cfg.eval.source_history,
        ground_truth: cfg.eval.target_ground_truth,
    };
    if a.mode == EvalMode::Cross && (a.source.is_none() || a.target.is_none()) {
        return Err(Error::Config(
            "cross mode requires --source and --target".into(),
        ));
    }

    let [train_set, input, held] = read_prepared(&data)?;
    let all: Vec<usize> = (0..input.num_domains()).collect();
    let checkpoint = match a.mode {
        EvalMode::BaselinePopularity => None,
        _ => {
            let dir = required(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
            let (model, manifest) = load_checkpoint(&dir)?;
            check_shapes(&model, &manifest.domain_ids, manifest.concatenated, &input)?;
            Some((dir, model, manifest))
        }
    };
    let targets = |covered: &[usize]| -> Result<Vec<usize>> {
        match a.target {
            Some(t) => {
                position(covered, t, "target")?;
                Ok(vec![t])
            }
            None => Ok(covered.to_vec()),
        }
    };

    let mut domains = Vec::new();
    match a.mode {
        EvalMode::BaselinePopularity => {
            for d in a.source.iter().chain(a.target.iter()) {
                position(&all, *d, "requested")?;
            }
            let scorer = PopularityScorer::from_train(&train_set);
            for t in targets(&all)? {
                let e = match a.source {
                    Some(s) => eval_cross_domain(&scorer, &input, &held, s, t, &ks, opts)?,
                    None => eval_single_domain(&scorer, &input, &held, t, &ks)?,
                };
                domains.push(summarize(&e, t));
            }
        }
        EvalMode::Single | EvalMode::Cross => {
            let (_, model, manifest) = checkpoint.as_ref().expect("loaded above");
            if manifest.concatenated {
                return Err(Error::Config(
                    "checkpoint was trained on concatenated domains; use --mode baseline-concat"
                        .into(),
                ));
            }
            let ids = &manifest.domain_ids;
            let (pin, pheld) = (project_domains(&input, ids)?, project_domains(&held, ids)?);
            let scorer = PoeScorer::new(model);
            let scorer: &dyn Scorer = &scorer;
            if a.mode == EvalMode::Single {
                if a.source.is_some() {
                    return Err(Error::Config("single mode takes no --source".into()));
                }
                for t in targets(ids)? {
                    let m = position(ids, t, "target")?;
                    domains.push(summarize(
                        &eval_single_domain(scorer, &pin, &pheld, m, &ks)?,
                        t,
                    ));
                }
            } else {
                let (s, t) = (a.source.expect("checked"), a.target.expect("checked"));
                let (ms, mt) = (position(ids, s, "source")?, position(ids, t, "target")?);
                let e = eval_cross_domain(scorer, &pin, &pheld, ms, mt, &ks, opts)?;
                domains.push(summarize(&e, t));
            }
        }
        EvalMode::BaselineConcat => {
            let (_, model, manifest) = checkpoint.as_ref().expect("loaded above");
            if !manifest.concatenated || manifest.domain_ids != all {
                return Err(Error::Config(
                    "baseline-concat needs a checkpoint trained with --concat on every domain"
                        .into(),
                ));
            }
            let scorer = ConcatScorer::new(model, input.item_counts_per_domain())?;
            for t in targets(&all)? {
                domains.push(summarize(
                    &eval_concatenated(&scorer, &input, &held, t, &ks)?,
                    t,
                ));
            }
        }
    }

    let label = a
        .label
        .clone()
        .or_else(|| {
            checkpoint
                .as_ref()
                .and_then(|(dir, _, _)| recorded_label(dir))
        })
        .unwrap_or_else(|| a.mode.name().to_string());
    let report = EvalReport {
        label,
        mode: a.mode.name().to_string(),
        source: a.source,
        ks,
        domains,
    };
    let csv = report.to_csv();
    write_text(
        &out.join("report.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    write_text(&out.join("report.csv"), &csv)?;
    Ok(csv)
}

pub fn cmd_pareto(a: &ParetoArgs) -> Result<String> {
    let metric = a.metric.name();
    let mut points = Vec::new();
    let mut reference: Option<Vec<usize>> = None;
    for path in &a.reports {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: EvalReport = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("{}: not an evaluation report: {e}", path.display()))
        })?;
        let domains: Vec<usize> = report.domains.iter().map(|d| d.domain).collect();
        match &reference {
            None => reference = Some(domains.clone()),
            Some(r) if *r != domains => {
                return Err(Error::Config(format!(
                    "inconsistent metric settings: {} covers domains {domains:?}, expected {r:?}",
                    path.display()
                )))
            }
            Some(_) => {}
        }
        let values = domains
            .iter()
            .map(|&d| {
                report.value(d, metric, a.k).ok_or_else(|| {
                    Error::Config(format!(
                        "inconsistent metric settings: {} has no {metric}@{} (K list {:?})",
                        path.display(),
                        a.k,
                        report.ks
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = if report.label.is_empty() {
            path.file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        } else {
            report.label.clone()
        };
        points.push(ParetoPoint::new(label, values));
    }
    let csv = pareto_csv(&points);
    write_text(&a.out, &csv)?;
    Ok(csv)
}
