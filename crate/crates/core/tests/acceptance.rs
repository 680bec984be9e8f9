//! Acceptance harness: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use impactibility::calibration::{best_linear_predictor, CalibrationOptions, CalibrationReport};
use impactibility::forest::{
    fit_causal_forest, grow_causal_tree, leaf_estimate, CausalForestModel, CausalTreeInput,
    ForestConfig, RankedFeatures,
};
use impactibility::pipeline::write_predictions;
use impactibility::policy::{cate_topk_policy, impact_ci, nnt, risk_threshold_policy};
use impactibility::rng::{derive_seed, stream, Domain};
use impactibility::stats::{mean, pearson};
use impactibility::synth::{
    generate, generate_deterministic, oracle_policy_value, DGPConfig, EffectShape, SyntheticCohort,
};

const SEEDS: u64 = 20;
const N: usize = 20_000;
const TREES: usize = 2_000;

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(id: u32, pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        id,
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = stream(2024, Domain::Calibration, 1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let nt = rng.random_range(1..=12usize);
        let nc = rng.random_range(1..=12usize);
        let t: Vec<f64> = (0..nt).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let c: Vec<f64> = (0..nc).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let ones = |v: &[f64]| v.iter().filter(|&&x| x == 1.0).count();
        let oracle = ones(&t) as f64 / nt as f64 - ones(&c) as f64 / nc as f64;
        let got = leaf_estimate(&t, &c).expect("both arms present");
        worst = worst.max((got - oracle).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-12 && secs < 1.0,
        format!("leaf estimate vs difference-of-means oracle on 1000 fixtures: max error {worst:.1e}, {secs:.3}s"),
    )
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let rows = [(1_246.0, 39_985u64, 33u64), (1_461.0, 18_993, 13), (2_478.0, 39_648, 16), (4_458.0, 102_534, 23)];
    let got: Vec<u64> = rows.iter().map(|&(p, n, _)| nnt(p, n).expect("positive")).collect();
    let want: Vec<u64> = rows.iter().map(|r| r.2).collect();
    let secs = t0.elapsed().as_secs_f64();
    report(2, got == want && secs < 1.0, format!("reference rows give NNT {got:?} (expected {want:?})"))
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let s = generate(&DGPConfig {
        n: 2_000,
        seed: 3,
        ..Default::default()
    })
    .expect("valid config");
    let c = &s.cohort;
    let rows: Vec<&[f64]> = c.units().iter().map(|u| u.x.as_slice()).collect();
    let features = RankedFeatures::from_rows(&rows);
    let y = c.outcome();
    let w = c.treatment();
    let treated: Vec<bool> = c.units().iter().map(|u| u.w).collect();
    let config = ForestConfig {
        center: false,
        ..Default::default()
    };
    let mut changed = 0;
    let mut splits = 0;
    let trees = 50;
    for t in 0..trees {
        let mut rng = stream(t, Domain::Holdout, 7);
        let mut all: Vec<u32> = (0..c.len() as u32).collect();
        all.shuffle(&mut rng);
        let (structure, estimation) = all.split_at(c.len() / 2);
        let input = CausalTreeInput {
            features: &features,
            outcome: &y,
            treatment: &w,
            raw_outcome: &y,
            treated: &treated,
        };
        let before = grow_causal_tree(&input, structure, estimation, &config, t);

        let mut permuted = y.clone();
        let mut values: Vec<f64> = estimation.iter().map(|&r| y[r as usize]).collect();
        values.shuffle(&mut rng);
        for (&r, v) in estimation.iter().zip(values) {
            permuted[r as usize] = v;
        }
        let input = CausalTreeInput {
            outcome: &permuted,
            raw_outcome: &permuted,
            ..input
        };
        let after = grow_causal_tree(&input, structure, estimation, &config, t);
        splits += before.splits().len();
        if before.splits() != after.splits() {
            changed += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        3,
        changed == 0 && splits > 0 && secs < 30.0,
        format!("{trees} trees ({splits} splits) on 2000 units, {changed} changed after permuting estimation outcomes, {secs:.1}s"),
    )
}

struct PolicyRow {
    name: &'static str,
    estimated: f64,
    oracle: f64,
    ci: (f64, f64),
}

struct MismatchRun {
    corr: f64,
    mse: f64,
    mse_constant: f64,
    calibration: CalibrationReport,
    overlap_violation: f64,
    policies: Vec<PolicyRow>,
    fit_secs: f64,
}

fn calibrate(s: &SyntheticCohort, model: &CausalForestModel) -> CalibrationReport {
    let oob = model.predict_oob(&s.cohort).expect("training cohort");
    best_linear_predictor(
        &s.cohort,
        &oob,
        model.oob_outcome(),
        model.oob_propensity(),
        &CalibrationOptions::default(),
    )
    .expect("calibration fit")
}

fn forest(seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees: TREES,
        seed,
        ..Default::default()
    }
}

fn mismatch_run(seed: u64) -> MismatchRun {
    let dgp = DGPConfig {
        n: N,
        seed,
        ..Default::default()
    };
    let s = generate(&dgp).expect("valid config");
    let t0 = Instant::now();
    let model = fit_causal_forest(&s.cohort, &forest(seed)).expect("fit");
    let fit_secs = t0.elapsed().as_secs_f64();

    let oob = model.predict_oob(&s.cohort).expect("training cohort");
    let tau_hat: Vec<f64> = oob.iter().map(|t| t.tau_hat).collect();
    let tau = &s.oracle.true_tau;
    let ate = mean(tau).expect("non-empty");
    let n = tau.len() as f64;
    let mse = tau_hat.iter().zip(tau).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mse_constant = tau.iter().map(|b| (ate - b) * (ate - b)).sum::<f64>() / n;
    let calibration = calibrate(&s, &model);
    let e = model.oob_propensity();
    let overlap_violation = e.iter().filter(|&&v| !(0.05..=0.95).contains(&v)).count() as f64 / n;

    // the next "year": a fresh cohort from the same process
    let holdout = generate(&dgp.with_seed(derive_seed(seed, Domain::Holdout, 0))).expect("valid config");
    let predicted: Vec<f64> = model
        .predict(&holdout.cohort)
        .expect("same schema")
        .iter()
        .map(|t| t.tau_hat)
        .collect();
    let selections: Vec<(&'static str, Vec<u64>)> = vec![
        ("risk>=0.25", risk_threshold_policy(&holdout.cohort, 0.25, None).expect("valid")),
        ("top10%", cate_topk_policy(&holdout.cohort, &predicted, 0.1).expect("valid")),
        ("top20%", cate_topk_policy(&holdout.cohort, &predicted, 0.2).expect("valid")),
        ("top50%", cate_topk_policy(&holdout.cohort, &predicted, 0.5).expect("valid")),
    ];
    let policies = selections
        .into_iter()
        .map(|(name, ids)| {
            let rows: Vec<usize> = ids.iter().map(|&id| holdout.cohort.position(id).expect("member")).collect();
            PolicyRow {
                name,
                estimated: -rows.iter().map(|&r| predicted[r]).sum::<f64>(),
                oracle: oracle_policy_value(&holdout, &ids).expect("members"),
                ci: impact_ci(&model, &holdout.cohort, &ids).expect("groups"),
            }
        })
        .collect();
    MismatchRun {
        corr: pearson(&tau_hat, tau).unwrap_or(f64::NAN),
        mse,
        mse_constant,
        calibration,
        overlap_violation,
        policies,
        fit_secs,
    }
}

fn shape_calibration(shape: EffectShape, seed: u64) -> CalibrationReport {
    let s = generate(&DGPConfig {
        n: N,
        seed,
        effect_shape: shape,
        ..Default::default()
    })
    .expect("valid config");
    let model = fit_causal_forest(&s.cohort, &forest(seed)).expect("fit");
    calibrate(&s, &model)
}

fn count(runs: &[MismatchRun], f: impl Fn(&MismatchRun) -> bool) -> usize {
    runs.iter().filter(|r| f(r)).count()
}

fn criterion_4(runs: &[MismatchRun]) -> Outcome {
    let ok = count(runs, |r| r.corr >= 0.5 && r.mse < r.mse_constant);
    let corr: Vec<f64> = runs.iter().map(|r| r.corr).collect();
    let ratio: Vec<f64> = runs.iter().map(|r| r.mse / r.mse_constant).collect();
    let max_fit = runs.iter().map(|r| r.fit_secs).fold(0.0, f64::max);
    report(
        4,
        ok >= 18,
        format!(
            "{ok}/{SEEDS} seeds with corr >= 0.5 and MSE below the constant predictor (corr min {:.3} mean {:.3}; MSE ratio max {:.3}; slowest fit {max_fit:.0}s)",
            corr.iter().copied().fold(f64::INFINITY, f64::min),
            mean(&corr).unwrap_or(f64::NAN),
            ratio.iter().copied().fold(0.0, f64::max),
        ),
    )
}

fn criterion_5(runs: &[MismatchRun], null: &[CalibrationReport], constant: &[CalibrationReport]) -> Outcome {
    let power = count(runs, |r| {
        let c = &r.calibration;
        c.p_beta.is_some_and(|p| p < 0.05) && c.beta.is_some_and(|b| (0.6..=1.4).contains(&b))
    });
    let rejections = null.iter().filter(|c| c.p_beta.is_some_and(|p| p < 0.05)).count();
    let alpha_ok = constant.iter().filter(|c| (0.7..=1.3).contains(&c.alpha)).count();
    let betas: Vec<String> = runs
        .iter()
        .map(|r| r.calibration.beta.map_or("-".into(), |b| format!("{b:.2}")))
        .collect();
    let alphas: Vec<String> = constant.iter().map(|c| format!("{:.2}", c.alpha)).collect();
    let need = (SEEDS as f64 * 0.8).ceil() as usize;
    let null_cap = (SEEDS as f64 * 0.2).floor() as usize;
    report(
        5,
        power >= need && rejections <= null_cap && alpha_ok >= need,
        format!(
            "mismatch beta in [0.6,1.4] with p<0.05: {power}/{SEEDS} (betas {}); null rejections {rejections}/{SEEDS}; constant alpha in [0.7,1.3]: {alpha_ok}/{SEEDS} (alphas {})",
            betas.join(" "),
            alphas.join(" ")
        ),
    )
}

fn criterion_6(runs: &[MismatchRun]) -> Outcome {
    let need = (SEEDS as f64 * 0.8).ceil() as usize;
    let mut parts = Vec::new();
    let mut pass = true;
    for k in 1..4 {
        let errs: Vec<f64> = runs
            .iter()
            .map(|r| {
                let p = &r.policies[k];
                (p.estimated - p.oracle).abs() / p.oracle
            })
            .collect();
        let ok = errs.iter().filter(|&&e| e <= 0.2).count();
        pass &= ok >= need;
        parts.push(format!(
            "{}: {ok}/{SEEDS} within 20% (median error {:.1}%)",
            runs[0].policies[k].name,
            100.0 * median(&errs)
        ));
    }
    report(6, pass, parts.join("; "))
}

fn median(v: &[f64]) -> f64 {
    let s = impactibility::stats::sorted(v);
    impactibility::stats::quantile_sorted(&s, 0.5).unwrap_or(f64::NAN)
}

fn criterion_7(runs: &[MismatchRun]) -> Outcome {
    let ok = count(runs, |r| {
        let risk = &r.policies[0];
        let top = &r.policies[3];
        top.oracle >= 2.0 * risk.oracle && top.estimated > risk.estimated
    });
    let ratios: Vec<f64> = runs.iter().map(|r| r.policies[3].oracle / r.policies[0].oracle).collect();
    report(
        7,
        ok == SEEDS as usize,
        format!(
            "{ok}/{SEEDS} seeds with oracle top-50% >= 2x oracle risk policy and the same estimated ordering (ratio min {:.2} median {:.2})",
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            median(&ratios)
        ),
    )
}

fn criterion_8(runs: &[MismatchRun]) -> Outcome {
    let need = (SEEDS as f64 * 0.8).ceil() as usize;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..4 {
        let ok = count(runs, |r| {
            let p = &r.policies[k];
            p.ci.0 <= p.oracle && p.oracle <= p.ci.1
        });
        pass &= ok >= need;
        parts.push(format!("{}: {ok}/{SEEDS}", runs[0].policies[k].name));
    }
    report(8, pass, format!("95% intervals covering the oracle value (approximate): {}", parts.join("; ")))
}

fn prediction_bytes(threads: usize) -> (Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
    pool.install(|| {
        let s = generate(&DGPConfig {
            n: 3_000,
            seed: 9,
            ..Default::default()
        })
        .expect("valid config");
        let model = fit_causal_forest(
            &s.cohort,
            &ForestConfig {
                n_trees: 200,
                seed: 9,
                ..Default::default()
            },
        )
        .expect("fit");
        let mut full = Vec::new();
        write_predictions(&s.cohort, &model.predict(&s.cohort).expect("schema"), &mut full).expect("write");
        let mut oob = Vec::new();
        write_predictions(&s.cohort, &model.predict_oob(&s.cohort).expect("training"), &mut oob).expect("write");
        (full, oob)
    })
}

fn criterion_9() -> Outcome {
    let a = prediction_bytes(1);
    let b = prediction_bytes(1);
    let c = prediction_bytes(8);
    let same_runs = a == b;
    let same_threads = a == c;
    report(
        9,
        same_runs && same_threads,
        format!(
            "prediction CSVs identical across runs: {same_runs}; across 1 vs 8 threads: {same_threads} ({} bytes)",
            a.0.len() + a.1.len()
        ),
    )
}

fn criterion_10(runs: &[MismatchRun]) -> Outcome {
    let worst = runs.iter().map(|r| r.overlap_violation).fold(0.0, f64::max);
    let s = generate_deterministic(5_000, 10).expect("valid");
    let model = fit_causal_forest(
        &s.cohort,
        &ForestConfig {
            n_trees: 200,
            seed: 10,
            ..Default::default()
        },
    )
    .expect("fit");
    let designed = model
        .oob_propensity()
        .iter()
        .filter(|&&v| !(0.05..=0.95).contains(&v))
        .count() as f64
        / s.cohort.len() as f64;
    report(
        10,
        worst < 0.05 && designed > 0.5,
        format!(
            "default synthetic cohorts: worst violation fraction {:.2}% at eps 0.05 over {SEEDS} seeds; deterministic assignment: {:.1}%",
            100.0 * worst,
            100.0 * designed
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3(), criterion_9()];

    let mut runs = Vec::new();
    for seed in 1..=SEEDS {
        let r = mismatch_run(seed);
        eprintln!(
            "mismatch seed {seed}: corr {:.3} mse/const {:.3} beta {:?} p {:?} ratio {:.2} fit {:.0}s",
            r.corr,
            r.mse / r.mse_constant,
            r.calibration.beta,
            r.calibration.p_beta,
            r.policies[3].oracle / r.policies[0].oracle,
            r.fit_secs
        );
        runs.push(r);
    }
    let null: Vec<CalibrationReport> = (1..=SEEDS).map(|s| shape_calibration(EffectShape::Null, s)).collect();
    let constant: Vec<CalibrationReport> =
        (1..=SEEDS).map(|s| shape_calibration(EffectShape::Constant, s)).collect();

    outcomes.extend([
        criterion_4(&runs),
        criterion_5(&runs, &null, &constant),
        criterion_6(&runs),
        criterion_7(&runs),
        criterion_8(&runs),
        criterion_10(&runs),
    ]);
    outcomes.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &outcomes {
        println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        outcomes.len() - failed,
        outcomes.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
