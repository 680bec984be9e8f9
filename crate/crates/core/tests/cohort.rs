use impactibility::cohort::{
    assign_ventiles, export_cohort, load_cohort_as, partition_subgroups, smd, ventile_of, Period,
    Provenance, RiskBand,
};
use impactibility::synth::{generate, DGPConfig};
use proptest::prelude::*;

fn synthetic(n: usize, seed: u64) -> impactibility::synth::SyntheticCohort {
    generate(&DGPConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn synthetic_cohort_round_trips_through_csv() {
    let s = synthetic(500, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    export_cohort(&s.cohort, &path).unwrap();
    let back = load_cohort_as(&path, s.cohort.schema(), Provenance::ObservationalThreshold).unwrap();
    assert_eq!(back.units(), s.cohort.units());

    let again = dir.path().join("again.csv");
    export_cohort(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn subgroups_partition_a_synthetic_cohort() {
    let s = synthetic(3_000, 5);
    let groups = partition_subgroups(&s.cohort);
    assert_eq!(groups.total(), s.cohort.len());
    let mut all: Vec<u64> = groups.iter().flat_map(|(_, ids)| ids.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), s.cohort.len());
    for (&(period, band), ids) in groups.iter() {
        for id in ids {
            let u = &s.cohort.units()[s.cohort.position(*id).unwrap()];
            assert_eq!(u.period, period);
            assert_eq!(RiskBand::of(u.risk), band);
        }
    }
    // only post, high-risk units can be treated
    for u in s.cohort.units().iter().filter(|u| u.w) {
        assert_eq!((u.period, RiskBand::of(u.risk)), (Period::Post, RiskBand::AtOrAbove));
    }
}

fn two_pass_smd(a: &[f64], b: &[f64]) -> f64 {
    let moments = |v: &[f64]| {
        let n = v.len() as f64;
        let mut total = 0.0;
        for x in v {
            total += x;
        }
        let m = total / n;
        let mut ss = 0.0;
        for x in v {
            ss += (x - m).powi(2);
        }
        (m, ss / (n - 1.0))
    };
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    (ma - mb) / ((va + vb) / 2.0).sqrt()
}

#[test]
fn smd_matches_two_pass_oracle_and_is_antisymmetric() {
    let s = synthetic(4_000, 6);
    let groups = partition_subgroups(&s.cohort);
    let pre: Vec<u64> = groups
        .get(Period::Pre, RiskBand::Below)
        .iter()
        .chain(groups.get(Period::Pre, RiskBand::AtOrAbove))
        .copied()
        .collect();
    let post: Vec<u64> = groups
        .get(Period::Post, RiskBand::Below)
        .iter()
        .chain(groups.get(Period::Post, RiskBand::AtOrAbove))
        .copied()
        .collect();
    let schema = s.cohort.schema();
    for feature in ["AGE", "LAPS2DC", "COPS2"] {
        let j = schema.column_index(feature).unwrap();
        let values = |ids: &[u64]| -> Vec<f64> {
            ids.iter()
                .map(|id| s.cohort.units()[s.cohort.position(*id).unwrap()].x[j])
                .collect()
        };
        let got = smd(&s.cohort, feature, &pre, &post).unwrap();
        let oracle = two_pass_smd(&values(&pre), &values(&post));
        assert!((got - oracle).abs() <= 1e-12, "{feature}: {got} vs {oracle}");
        let swapped = smd(&s.cohort, feature, &post, &pre).unwrap();
        assert_eq!(got, -swapped);
    }
    // high-risk units differ from low-risk units on the prognostic score
    let high = groups.get(Period::Pre, RiskBand::AtOrAbove);
    let low = groups.get(Period::Pre, RiskBand::Below);
    assert!(smd(&s.cohort, "COPS2", high, low).unwrap() > 0.3);
}

#[test]
fn every_unit_gets_the_ventile_of_its_risk() {
    let s = synthetic(2_000, 7);
    let v = assign_ventiles(&s.cohort);
    assert_eq!(v, s.cohort.ventiles());
    for (u, &k) in s.cohort.units().iter().zip(&v) {
        let lo = f64::from(k - 1) / 20.0;
        assert!(u.risk >= lo && (u.risk < lo + 0.05 || k == 20));
    }
}

proptest! {
    #[test]
    fn ventile_is_monotone_and_total(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!((1..=20).contains(&ventile_of(lo)));
        prop_assert!(ventile_of(lo) <= ventile_of(hi));
    }
}
