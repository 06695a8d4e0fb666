use poe_rec::synthgen::{generate, generate_with_truth, SynthConfig};

#[test]
fn erased_fraction_is_exact() {
    let mut cfg = SynthConfig::new(333, vec![40, 40], 0.9, 12);
    cfg.missing_domain_fraction = 0.5;
    let (ds, truth) = generate_with_truth(&cfg).unwrap();
    assert_eq!(truth.erased.iter().filter(|&&e| e).count(), 166);
    for u in 0..ds.num_users() {
        assert!(ds.is_present(u, 0));
        assert_eq!(ds.is_present(u, 1), !truth.erased[u]);
    }
}

#[test]
fn popular_items_are_sampled_more() {
    let mut cfg = SynthConfig::new(2000, vec![60], 0.0, 3);
    cfg.popularity_std = 2.0;
    cfg.interactions_mean = 5.0;
    let (ds, truth) = generate_with_truth(&cfg).unwrap();
    let counts = ds.domain(0).item_counts();
    let mut by_bias: Vec<usize> = (0..60).collect();
    by_bias.sort_by(|&a, &b| truth.item_bias[0][a].total_cmp(&truth.item_bias[0][b]));
    let low: usize = by_bias[..20].iter().map(|&i| counts[i]).sum();
    let high: usize = by_bias[40..].iter().map(|&i| counts[i]).sum();
    assert!(high > 3 * low, "high {high}, low {low}");
}

#[test]
fn seeds_change_data_and_repeat_exactly() {
    let a = generate(&SynthConfig::new(50, vec![30, 25], 0.5, 1)).unwrap();
    let b = generate(&SynthConfig::new(50, vec![30, 25], 0.5, 1)).unwrap();
    let c = generate(&SynthConfig::new(50, vec![30, 25], 0.5, 2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_settings_are_rejected() {
    let mut cfg = SynthConfig::new(10, vec![30, 20], 1.5, 0);
    assert!(generate(&cfg).is_err());
    cfg.correlation = 0.5;
    cfg.missing_domain_fraction = 1.0;
    assert!(generate(&cfg).is_err());
    assert!(generate(&SynthConfig::new(10, vec![15], 0.0, 0)).is_err());
}
