//! Test for effect heterogeneity with the best-linear-predictor fit on
//! out-of-bag estimates, for an informative and a null effect surface.
//!
//! cargo run --release --example calibrate -- [n] [trees] [seed]

use std::env;

use impactibility::calibration::{best_linear_predictor, CalibrationOptions, Covariance};
use impactibility::forest::{fit_causal_forest, ForestConfig};
use impactibility::synth::{generate, DGPConfig, EffectShape};

fn main() -> impactibility::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let trees = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    for shape in [EffectShape::Mismatch, EffectShape::Null] {
        let s = generate(&DGPConfig {
            n,
            seed,
            effect_shape: shape,
            ..Default::default()
        })?;
        let model = fit_causal_forest(
            &s.cohort,
            &ForestConfig {
                n_trees: trees,
                seed,
                ..Default::default()
            },
        )?;
        let oob = model.predict_oob(&s.cohort)?;
        println!("== {shape:?} effects");
        for covariance in [Covariance::Hc3, Covariance::Cluster] {
            let report = best_linear_predictor(
                &s.cohort,
                &oob,
                model.oob_outcome(),
                model.oob_propensity(),
                &CalibrationOptions {
                    covariance,
                    ..Default::default()
                },
            )?;
            println!("-- {covariance:?}");
            print!("{}", report.to_table());
        }
    }
    Ok(())
}
