//! Draw a synthetic cohort, write it with its oracle columns, and compare
//! the four period-by-risk subgroups on a few covariates.
//!
//! cargo run --release --example simulate_cohort -- [n] [seed] [dir]

use std::env;
use std::path::PathBuf;

use impactibility::cohort::{partition_subgroups, smd, Period, RiskBand};
use impactibility::synth::{export_synthetic, generate, DGPConfig};

fn main() -> impactibility::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let dir = args.get(2).map_or_else(env::temp_dir, PathBuf::from);

    let s = generate(&DGPConfig {
        n,
        seed,
        ..Default::default()
    })?;
    let c = &s.cohort;
    let treated = c.units().iter().filter(|u| u.w).count();
    let readmitted = c.units().iter().filter(|u| u.y).count();
    println!("{} units, {} treated, {} readmitted", c.len(), treated, readmitted);

    let tau = &s.oracle.true_tau;
    let ate = tau.iter().sum::<f64>() / tau.len() as f64;
    println!("true average effect {ate:.4}");

    let groups = partition_subgroups(c);
    for ((period, band), ids) in groups.iter() {
        println!("{:>4} {:>16}: {} units", period.as_str(), format!("{band:?}"), ids.len());
    }
    let high = groups.get(Period::Post, RiskBand::AtOrAbove);
    let low = groups.get(Period::Post, RiskBand::Below);
    for feature in ["AGE", "LAPS2DC", "COPS2"] {
        println!("SMD {feature:<8} post high vs low: {:+.3}", smd(c, feature, high, low)?);
    }

    let path = dir.join("synthetic_cohort.csv");
    let oracle = export_synthetic(&s, &path)?;
    println!("wrote {} and {}", path.display(), oracle.display());
    Ok(())
}
