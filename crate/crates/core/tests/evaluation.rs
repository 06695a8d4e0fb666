use poe_rec::evaluation::{
    dominates, ndcg_at_k, pareto_front, pareto_mask, recall_at_k, ParetoPoint,
};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, usize)> {
    (1..40u32)
        .prop_flat_map(|n| {
            (
                Just((0..n).collect::<Vec<u32>>()).prop_shuffle(),
                prop::collection::btree_set(0..n, 1..=n as usize),
            )
        })
        .prop_flat_map(|(ranked, held)| {
            let len = ranked.len();
            (
                Just(ranked),
                Just(held.into_iter().collect::<Vec<_>>()),
                1..=len,
            )
        })
}

proptest! {
    #[test]
    fn metrics_are_bounded_and_perfect_ranking_scores_one((ranked, held, k) in instance()) {
        let r = recall_at_k(&ranked, &held, k).unwrap();
        let n = ndcg_at_k(&ranked, &held, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));

        let mut ideal = held.clone();
        ideal.extend(ranked.iter().filter(|i| !held.contains(i)));
        prop_assert_eq!(recall_at_k(&ideal, &held, k).unwrap(), 1.0);
        prop_assert!((ndcg_at_k(&ideal, &held, k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recall_is_monotone_in_k((ranked, held, k) in instance()) {
        // hits never decrease; the normalizer caps at |held|
        if k < ranked.len() && k >= held.len() {
            prop_assert!(recall_at_k(&ranked, &held, k + 1).unwrap() >= recall_at_k(&ranked, &held, k).unwrap());
        }
    }

    #[test]
    fn front_is_idempotent_and_undominated(
        values in prop::collection::vec(prop::collection::vec(0..4u8, 3), 1..25)
    ) {
        let points: Vec<ParetoPoint> = values
            .iter()
            .enumerate()
            .map(|(i, v)| ParetoPoint::new(i.to_string(), v.iter().map(|&x| x as f64).collect()))
            .collect();
        let front = pareto_front(&points);
        prop_assert!(!front.is_empty());
        prop_assert_eq!(pareto_front(&front), front.clone());
        for (p, on) in points.iter().zip(pareto_mask(&points)) {
            let beaten = points.iter().any(|q| dominates(&q.values, &p.values));
            prop_assert_eq!(on, !beaten);
        }
    }
}

#[test]
fn duplicates_share_the_front() {
    let pts = vec![
        ParetoPoint::new("a", vec![0.3, 0.2]),
        ParetoPoint::new("b", vec![0.3, 0.2]),
    ];
    assert_eq!(pareto_mask(&pts), vec![true, true]);
    assert!(!dominates(&[0.3, 0.2], &[0.3, 0.2]));
}

#[test]
fn untrained_model_is_below_popularity_on_synthetic_data() {
    use poe_rec::evaluation::{eval_cross_domain, CrossOptions, PoeScorer, PopularityScorer};
    use poe_rec::ingest::{fold_in_split, split_users, SplitSpec};
    use poe_rec::model::{ModelShape, PoeModel};
    use poe_rec::synthgen::{generate, SynthConfig};

    let full = generate(&SynthConfig::new(2000, vec![100, 100], 0.9, 5)).unwrap();
    let spec = SplitSpec {
        train_fraction: 0.8,
        ..SplitSpec::default()
    };
    let (train, test) = split_users(&full, &spec).unwrap();
    let (input, held) = fold_in_split(&test, &spec).unwrap();
    let model = PoeModel::new(ModelShape::new(train.item_counts_per_domain(), 32, 8), 5).unwrap();
    let opts = CrossOptions::default();
    let random =
        eval_cross_domain(&PoeScorer::new(&model), &input, &held, 0, 1, &[10], opts).unwrap();
    let pop = eval_cross_domain(
        &PopularityScorer::from_train(&train),
        &input,
        &held,
        0,
        1,
        &[10],
        opts,
    )
    .unwrap();
    let (r, p) = (random.summary().ndcg[0], pop.summary().ndcg[0]);
    assert!(r < p, "untrained {r} vs popularity {p}");
}
