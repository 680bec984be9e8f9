//! Fit an honest causal forest on a synthetic cohort and compare the
//! out-of-bag effect estimates with the true effects.
//!
//! cargo run --release --example fit_forest -- [n] [trees] [seed]

use std::env;
use std::time::Instant;

use impactibility::forest::{fit_causal_forest, ForestConfig};
use impactibility::stats::pearson;
use impactibility::synth::{generate, DGPConfig};

fn main() -> impactibility::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(5_000);
    let trees = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let s = generate(&DGPConfig {
        n,
        seed,
        ..Default::default()
    })?;
    let config = ForestConfig {
        n_trees: trees,
        seed,
        ..Default::default()
    };
    let start = Instant::now();
    let model = fit_causal_forest(&s.cohort, &config)?;
    println!("fit {trees} trees on {n} units in {:.1?}", start.elapsed());

    let oob = model.predict_oob(&s.cohort)?;
    let est: Vec<f64> = oob.iter().map(|t| t.tau_hat).collect();
    let truth = &s.oracle.true_tau;
    let mse = est.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    println!("corr(oob, true) {:.3}", pearson(&est, truth).unwrap_or(f64::NAN));
    println!("mse {mse:.6}");

    let covered = oob
        .iter()
        .zip(truth)
        .filter(|(t, &tau)| (t.tau_hat - tau).abs() <= 1.96 * t.variance.sqrt())
        .count();
    println!("pointwise 95% coverage {:.3}", covered as f64 / n as f64);

    println!("first five units:");
    for (t, tau) in oob.iter().zip(truth).take(5) {
        println!("  tau_hat {:+.4} (sd {:.4})  true {:+.4}", t.tau_hat, t.variance.sqrt(), tau);
    }
    Ok(())
}
