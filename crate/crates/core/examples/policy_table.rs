//! Train on one synthetic year, predict the next, and compare risk-based
//! targeting with per-ventile effect-based targeting.
//!
//! cargo run --release --example policy_table -- [n] [trees] [seed]

use std::env;

use impactibility::forest::{fit_causal_forest, ForestConfig};
use impactibility::policy::{evaluate, PolicySpec};
use impactibility::report::{emit_report, ReportFormat};
use impactibility::rng::{derive_seed, Domain};
use impactibility::synth::{generate, oracle_policy_value, DGPConfig};

fn main() -> impactibility::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let trees = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let dgp = DGPConfig {
        n,
        seed,
        ..Default::default()
    };
    let train = generate(&dgp)?;
    let next_year = generate(&dgp.with_seed(derive_seed(seed, Domain::Holdout, 0)))?;
    let model = fit_causal_forest(
        &train.cohort,
        &ForestConfig {
            n_trees: trees,
            seed,
            ..Default::default()
        },
    )?;
    let taus: Vec<f64> = model.predict(&next_year.cohort)?.iter().map(|t| t.tau_hat).collect();

    let specs = [
        PolicySpec::RiskThreshold {
            threshold: 0.25,
            period: None,
        },
        PolicySpec::CateTopkPerVentile { k: 0.1 },
        PolicySpec::CateTopkPerVentile { k: 0.2 },
        PolicySpec::CateTopkPerVentile { k: 0.5 },
    ];
    let mut results = Vec::new();
    for spec in &specs {
        let r = evaluate(spec, &next_year.cohort, &taus, Some(&model))?;
        let oracle = oracle_policy_value(&next_year, &r.treated_ids)?;
        println!("{:<28} estimated {:>8.1}  true {:>8.1}", r.strategy, r.prevented, oracle);
        results.push(r);
    }
    println!();
    print!("{}", emit_report(&results, ReportFormat::TextTable)?);
    Ok(())
}
