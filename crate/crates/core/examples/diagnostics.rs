//! Overlap, effect-by-ventile, effect surfaces and length of stay for a
//! fitted forest; CSVs go to the given directory.
//!
//! cargo run --release --example diagnostics -- [n] [trees] [dir]

use std::env;
use std::fs::File;
use std::path::PathBuf;

use impactibility::diagnostics::{
    cate_by_ventile, cate_surface, los_by_ventile, overlap_report, write_surfaces, SurfaceSpec,
};
use impactibility::forest::{fit_causal_forest, ForestConfig};
use impactibility::synth::{generate, DGPConfig};

fn main() -> impactibility::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let trees = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let dir = args.get(2).map_or_else(env::temp_dir, PathBuf::from);

    let s = generate(&DGPConfig {
        n,
        ..Default::default()
    })?;
    let model = fit_causal_forest(
        &s.cohort,
        &ForestConfig {
            n_trees: trees,
            ..Default::default()
        },
    )?;

    let overlap = overlap_report(model.oob_propensity(), &s.cohort, 0.05)?;
    println!(
        "propensity outside [0.05, 0.95]: {:.2}%",
        100.0 * overlap.overall.fraction_outside()
    );

    let oob: Vec<f64> = model.predict_oob(&s.cohort)?.iter().map(|t| t.tau_hat).collect();
    println!("ventile      n    mean tau_hat");
    for (v, summary) in cate_by_ventile(&oob, s.cohort.ventiles())? {
        if let Some(sm) = summary {
            println!("{v:>7} {:>6} {:>+14.4}", sm.n, sm.mean);
        }
    }

    println!("ventile  share of readmissions  mean LOS");
    for cell in los_by_ventile(&s.cohort) {
        if let (Some(share), Some(los)) = (cell.readmission_share, cell.mean_los) {
            println!("{:>7} {:>22.3} {:>9.2}", cell.ventile, share, los);
        }
    }

    let grids = cate_surface(&model, &SurfaceSpec::acuity_by_burden())?;
    for g in &grids {
        let flat: Vec<f64> = g.tau.iter().flatten().copied().collect();
        let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("surface {}: tau_hat in [{lo:+.3}, {hi:+.3}]", g.label);
    }
    let path = dir.join("cate_surface.csv");
    write_surfaces(&grids, File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
