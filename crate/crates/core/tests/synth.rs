use impactibility::rng::{stream, Domain};
use impactibility::synth::{generate, oracle_policy_value, DGPConfig, EffectShape, PayoffShape};
use rand::seq::SliceRandom;

fn config(n: usize, seed: u64) -> DGPConfig {
    DGPConfig {
        n,
        seed,
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_cohorts() {
    let a = generate(&config(2_000, 11)).unwrap();
    let b = generate(&config(2_000, 11)).unwrap();
    assert_eq!(a.cohort.units(), b.cohort.units());
    assert_eq!(a.oracle, b.oracle);
    let c = generate(&config(2_000, 12)).unwrap();
    assert_ne!(a.cohort.units(), c.cohort.units());
}

#[test]
fn untreated_readmission_rate_matches_target() {
    let s = generate(&config(200_000, 1)).unwrap();
    let (mut y, mut n) = (0usize, 0usize);
    for u in s.cohort.units().iter().filter(|u| !u.w) {
        n += 1;
        y += usize::from(u.y);
    }
    let rate = y as f64 / n as f64;
    assert!((rate - 0.124).abs() <= 0.01, "rate {rate}");
}

#[test]
fn oracle_columns_are_probabilities() {
    let s = generate(&config(20_000, 2)).unwrap();
    let o = &s.oracle;
    let unclipped = o
        .true_m
        .iter()
        .zip(&o.true_tau)
        .filter(|(m, t)| (0.0..=1.0).contains(&(*m + *t)))
        .count();
    assert!(unclipped as f64 >= 0.99 * s.cohort.len() as f64);
    for (m, t) in o.true_m.iter().zip(&o.true_tau) {
        assert!((0.0..=1.0).contains(m));
        assert!((0.0..=1.0).contains(&(m + t)));
    }
}

#[test]
fn assignment_probability_is_bounded_by_post_share() {
    let cfg = config(20_000, 3);
    let s = generate(&cfg).unwrap();
    for &e in &s.true_propensity {
        assert!((0.0..=cfg.post_fraction + 1e-12).contains(&e));
    }
    let treated = s.cohort.units().iter().filter(|u| u.w).count() as f64;
    let expected: f64 = s.true_propensity.iter().sum();
    assert!((treated - expected).abs() < 4.0 * expected.sqrt());
}

#[test]
fn null_and_constant_shapes() {
    let null = generate(&DGPConfig {
        effect_shape: EffectShape::Null,
        ..config(3_000, 4)
    })
    .unwrap();
    assert!(null.oracle.true_tau.iter().all(|&t| t == 0.0));
    let ids = null.cohort.unit_ids();
    assert_eq!(oracle_policy_value(&null, &ids[..500]).unwrap(), 0.0);

    let constant = generate(&DGPConfig {
        effect_shape: EffectShape::Constant,
        ..config(3_000, 4)
    })
    .unwrap();
    assert!(constant.oracle.true_tau.iter().all(|&t| t == -0.03));
}

#[test]
fn oracle_value_of_empty_and_unknown_sets() {
    let s = generate(&config(1_000, 5)).unwrap();
    assert_eq!(oracle_policy_value(&s, &[]).unwrap(), 0.0);
    assert!(oracle_policy_value(&s, &[999_999]).is_err());
}

#[test]
fn treating_all_beneficial_units_dominates_random_sets() {
    let s = generate(&config(5_000, 6)).unwrap();
    let units = s.cohort.units();
    let best: Vec<u64> = units
        .iter()
        .zip(&s.oracle.true_tau)
        .filter(|(_, &t)| t < 0.0)
        .map(|(u, _)| u.unit_id)
        .collect();
    let best_value = oracle_policy_value(&s, &best).unwrap();
    assert!(best_value > 0.0);
    let mut ids = s.cohort.unit_ids();
    let mut rng = stream(6, Domain::Calibration, 0);
    for _ in 0..1000 {
        ids.shuffle(&mut rng);
        let value = oracle_policy_value(&s, &ids[..best.len()]).unwrap();
        assert!(value <= best_value + 1e-9);
    }
}

#[test]
fn lognormal_payoffs_stay_positive_for_readmissions() {
    let s = generate(&DGPConfig {
        payoff_shape: PayoffShape::Lognormal,
        ..config(5_000, 7)
    })
    .unwrap();
    for u in s.cohort.units() {
        assert_eq!(u.payoff > 0.0, u.y);
    }
}
