use impactibility::calibration::{
    best_linear_predictor, format_p_value, mean_oob_tau, CalibrationOptions, CalibrationReport,
    Covariance,
};
use impactibility::cohort::{Cohort, Provenance};
use impactibility::forest::TauEstimate;
use impactibility::rng::{stream, Domain};
use impactibility::synth::{generate, DGPConfig, SyntheticCohort};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

struct Inputs {
    synthetic: SyntheticCohort,
    taus: Vec<TauEstimate>,
    m: Vec<f64>,
    e: Vec<f64>,
}

// Oracle-quality nuisances and a noisy but informative effect estimate.
fn inputs(seed: u64) -> Inputs {
    let synthetic = generate(&DGPConfig {
        n: 20_000,
        seed,
        ..Default::default()
    })
    .unwrap();
    let mut rng = stream(seed, Domain::Calibration, 9);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let taus = synthetic
        .oracle
        .true_tau
        .iter()
        .map(|&t| TauEstimate {
            tau_hat: t + noise.sample(&mut rng),
            variance: 1e-4,
            oob_tree_count: 100,
        })
        .collect();
    let m = synthetic.oracle.true_m.clone();
    let e = synthetic.true_propensity.clone();
    Inputs { synthetic, taus, m, e }
}

fn fit(i: &Inputs, taus: &[TauEstimate], options: &CalibrationOptions) -> CalibrationReport {
    best_linear_predictor(&i.synthetic.cohort, taus, &i.m, &i.e, options).unwrap()
}

#[test]
fn doubling_the_predictions_halves_beta() {
    let i = inputs(1);
    let base = fit(&i, &i.taus, &CalibrationOptions::default());
    let doubled: Vec<TauEstimate> = i
        .taus
        .iter()
        .map(|t| TauEstimate {
            tau_hat: 2.0 * t.tau_hat,
            ..*t
        })
        .collect();
    let twice = fit(&i, &doubled, &CalibrationOptions::default());
    let (b1, b2) = (base.beta.unwrap(), twice.beta.unwrap());
    assert!((b2 - b1 / 2.0).abs() <= 1e-9 * b1.abs());
    assert!((twice.alpha - base.alpha / 2.0).abs() <= 1e-9 * base.alpha.abs());
    assert!((twice.p_beta.unwrap() - base.p_beta.unwrap()).abs() < 1e-9);
}

#[test]
fn solution_satisfies_the_normal_equations() {
    let i = inputs(2);
    let r = fit(&i, &i.taus, &CalibrationOptions::default());
    let (alpha, beta) = (r.alpha, r.beta.unwrap());
    let (mut ga, mut gb, mut scale) = (0.0, 0.0, 0.0);
    for (k, u) in i.synthetic.cohort.units().iter().enumerate() {
        if !(i.e[k] > 0.01 && i.e[k] < 0.99) {
            continue;
        }
        let wr = f64::from(u8::from(u.w)) - i.e[k];
        let a = r.mean_tau * wr;
        let b = (i.taus[k].tau_hat - r.mean_tau) * wr;
        let y = f64::from(u8::from(u.y)) - i.m[k];
        let resid = y - alpha * a - beta * b;
        ga += a * resid;
        gb += b * resid;
        scale += (a * y).abs() + (b * y).abs();
    }
    assert!(ga.abs() <= 1e-10 * scale && gb.abs() <= 1e-10 * scale, "{ga} {gb} {scale}");
}

#[test]
fn informative_predictions_are_calibrated() {
    for seed in 3..6 {
        let i = inputs(seed);
        let r = fit(&i, &i.taus, &CalibrationOptions::default());
        assert!(r.p_beta.unwrap() < 0.05, "seed {seed}: {r:?}");
        assert!((0.5..=1.5).contains(&r.beta.unwrap()), "seed {seed}: {r:?}");
        assert!((0.5..=1.5).contains(&r.alpha), "seed {seed}: {r:?}");
        assert!(r.p_alpha >= 0.0 && r.p_alpha <= 1.0);
        assert_eq!(r.n_used + r.n_excluded_oob + r.n_excluded_propensity, 20_000);
    }
}

#[test]
fn standard_errors_do_not_depend_on_unit_order() {
    let i = inputs(6);
    let mut order: Vec<usize> = (0..i.synthetic.cohort.len()).collect();
    order.shuffle(&mut stream(6, Domain::Calibration, 1));
    let units = order.iter().map(|&r| i.synthetic.cohort.units()[r].clone()).collect();
    let shuffled = Cohort::new(
        i.synthetic.cohort.schema().clone(),
        units,
        Provenance::ObservationalThreshold,
    )
    .unwrap();
    let pick = |v: &[f64]| -> Vec<f64> { order.iter().map(|&r| v[r]).collect() };
    let taus: Vec<TauEstimate> = order.iter().map(|&r| i.taus[r]).collect();
    for covariance in [Covariance::Hc3, Covariance::Cluster] {
        let options = CalibrationOptions {
            covariance,
            ..Default::default()
        };
        let a = fit(&i, &i.taus, &options);
        let b = best_linear_predictor(&shuffled, &taus, &pick(&i.m), &pick(&i.e), &options).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1e-12);
        assert!(close(a.se_alpha, b.se_alpha));
        assert!(close(a.se_beta.unwrap(), b.se_beta.unwrap()));
        assert!(close(a.alpha, b.alpha));
    }
}

#[test]
fn constant_predictions_are_degenerate() {
    let i = inputs(7);
    let flat: Vec<TauEstimate> = i
        .taus
        .iter()
        .map(|t| TauEstimate {
            tau_hat: -0.03,
            ..*t
        })
        .collect();
    let r = fit(&i, &flat, &CalibrationOptions::default());
    assert!(r.degenerate);
    assert_eq!((r.beta, r.se_beta, r.p_beta), (None, None, None));
    assert!(r.alpha.is_finite());
    assert!(r.to_json().contains("\"beta\": null"));
}

#[test]
fn units_without_estimates_or_overlap_are_excluded() {
    let mut i = inputs(8);
    i.taus[0].oob_tree_count = 0;
    i.e[1] = 0.0;
    i.e[2] = 0.995;
    let r = fit(&i, &i.taus, &CalibrationOptions::default());
    assert_eq!(r.n_excluded_oob, 1);
    assert_eq!(r.n_excluded_propensity, 2);
    assert_eq!(r.n_used, 19_997);
}

#[test]
fn mean_oob_tau_examples() {
    let est = |tau_hat: f64, oob_tree_count: u32| TauEstimate {
        tau_hat,
        variance: 0.0,
        oob_tree_count,
    };
    assert!((mean_oob_tau(&[est(-0.03, 4); 7]).unwrap() + 0.03).abs() < 1e-17);
    assert_eq!(mean_oob_tau(&[est(-0.1, 1), est(0.1, 1)]).unwrap(), 0.0);
    assert_eq!(mean_oob_tau(&[est(0.5, 0), est(0.1, 2)]).unwrap(), 0.1);
    assert!(mean_oob_tau(&[est(0.5, 0)]).is_err());
}

#[test]
fn p_values_render_compactly() {
    assert_eq!(format_p_value(5.3e-8), "5.3e-8");
    assert_eq!(format_p_value(2.23e-7), "2.23e-7");
    assert_eq!(format_p_value(0.0412), "0.0412");
}

proptest! {
    #[test]
    fn mean_matches_two_pass_oracle(values in prop::collection::vec(-1.0f64..1.0, 1..200)) {
        let est: Vec<TauEstimate> = values
            .iter()
            .map(|&v| TauEstimate { tau_hat: v, variance: 0.0, oob_tree_count: 1 })
            .collect();
        let first = values.iter().sum::<f64>() / values.len() as f64;
        let correction = values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64;
        let oracle = first + correction;
        prop_assert!((mean_oob_tau(&est).unwrap() - oracle).abs() <= 1e-15);
    }
}
