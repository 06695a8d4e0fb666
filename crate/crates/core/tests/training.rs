use std::fs;

use poe_rec::model::{LossConfig, ModelShape, PoeModel};
use poe_rec::synthgen::{generate, SynthConfig};
use poe_rec::training::{
    eligible_users, load_checkpoint, save_checkpoint, train, CheckpointMeta, Objective, TrainConfig,
};

fn setup(missing: f64) -> (poe_rec::ingest::MultiDomainDataset, PoeModel, TrainConfig) {
    let mut sc = SynthConfig::new(150, vec![30, 25], 0.7, 4);
    sc.interactions_mean = 6.0;
    sc.missing_domain_fraction = missing;
    let data = generate(&sc).unwrap();
    let model = PoeModel::new(ModelShape::new(data.item_counts_per_domain(), 12, 3), 4).unwrap();
    let mut cfg = TrainConfig::new(3, LossConfig::uniform(2));
    cfg.batch_size = 20;
    cfg.anneal_steps = 10;
    cfg.seed = 9;
    (data, model, cfg)
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let (data, model, cfg) = setup(0.3);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let mut m = model.clone();
        let report = pool.install(|| train(&mut m, &data, &cfg)).unwrap();
        (m.flatten(), report.trace)
    };
    let (a, ta) = run(1);
    let (b, tb) = run(3);
    assert_eq!(ta, tb);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn trace_follows_annealing_and_loss_improves() {
    let (data, mut model, mut cfg) = setup(0.0);
    cfg.epochs = 6;
    cfg.learning_rate = 1e-2;
    let report = train(&mut model, &data, &cfg).unwrap();
    let per_epoch = 150u64.div_ceil(20);
    for (e, row) in report.trace.iter().enumerate() {
        assert_eq!(row.step, per_epoch * (e as u64 + 1));
        let expected = cfg.anneal_cap * ((row.step - 1) as f64 / cfg.anneal_steps as f64).min(1.0);
        assert!((row.beta - expected).abs() < 1e-15);
    }
    assert!(report.trace.last().unwrap().mean_loss < report.trace[0].mean_loss);
    assert!(report
        .trace_csv()
        .starts_with("epoch,step,beta,mean_loss\n1,"));
}

#[test]
fn joint_only_skips_partial_users() {
    let (data, _, _) = setup(0.4);
    let joint = eligible_users(&data, Objective::JointOnly);
    let sub = eligible_users(&data, Objective::Subsampled);
    assert_eq!(sub.len(), 150);
    assert_eq!(joint.len(), 150 - 60);
    assert!(joint.iter().all(|&u| data.is_present(u, 1)));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let (data, mut model, cfg) = setup(0.0);
    let report = train(&mut model, &data, &cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let meta = CheckpointMeta {
        seed: cfg.seed,
        step: report.steps,
        ..CheckpointMeta::default()
    };
    let manifest = save_checkpoint(&model, tmp.path(), &meta).unwrap();
    assert_eq!(manifest.domain_ids, vec![0, 1]);
    let (back, loaded) = load_checkpoint(tmp.path()).unwrap();
    assert_eq!(back, model);
    assert_eq!(loaded, manifest);

    let victim = tmp.path().join(&manifest.tensors[3].file);
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() - 8]).unwrap();
    let err = load_checkpoint(tmp.path()).unwrap_err().to_string();
    assert!(err.contains(&manifest.tensors[3].name), "{err}");
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let (data, mut model, mut cfg) = setup(0.0);
    cfg.loss.lambda = vec![1.0];
    cfg.batch_size = 0;
    let before = model.clone();
    let err = train(&mut model, &data, &cfg).unwrap_err().to_string();
    assert!(
        err.contains("batch_size") && err.contains("lambda"),
        "{err}"
    );
    assert_eq!(model, before);
}
