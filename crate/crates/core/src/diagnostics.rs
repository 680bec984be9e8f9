//! Overlap, effect-by-ventile, effect surfaces and length of stay by
//! ventile. Every diagnostic writes a tidy CSV.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{partition_subgroups, Cohort, FeatureKind, Period, RiskBand, Schema, N_VENTILES};
use crate::error::{Error, Result};
use crate::forest::CausalForestModel;
use crate::stats::{quantile_sorted, sample_variance, sorted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub n: usize,
    pub fraction_below: f64,
    pub fraction_above: f64,
}

impl OverlapCell {
    fn of(e: impl Iterator<Item = f64>, epsilon: f64) -> Self {
        let (mut n, mut below, mut above) = (0usize, 0usize, 0usize);
        for v in e {
            n += 1;
            below += usize::from(v < epsilon);
            above += usize::from(v > 1.0 - epsilon);
        }
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        OverlapCell {
            n,
            fraction_below: frac(below),
            fraction_above: frac(above),
        }
    }

    pub fn fraction_outside(&self) -> f64 {
        self.fraction_below + self.fraction_above
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub epsilon: f64,
    pub overall: OverlapCell,
    pub subgroups: Vec<(Period, RiskBand, OverlapCell)>,
}

/// Share of units whose estimated propensity lies outside `[eps, 1 - eps]`,
/// overall and per period x risk-band subgroup.
pub fn overlap_report(oob_e: &[f64], cohort: &Cohort, epsilon: f64) -> Result<OverlapReport> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::argument(format!("epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    if oob_e.len() != cohort.len() {
        return Err(Error::argument(format!(
            "{} propensities for {} units",
            oob_e.len(),
            cohort.len()
        )));
    }
    let groups = partition_subgroups(cohort);
    let subgroups = groups
        .iter()
        .map(|(&(period, band), ids)| {
            let rows = cohort.positions_of(ids).expect("partition ids belong to the cohort");
            (period, band, OverlapCell::of(rows.iter().map(|&r| oob_e[r]), epsilon))
        })
        .collect();
    Ok(OverlapReport {
        epsilon,
        overall: OverlapCell::of(oob_e.iter().copied(), epsilon),
        subgroups,
    })
}

impl OverlapReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["subgroup", "epsilon", "n", "fraction_below", "fraction_above", "fraction_outside"])?;
        let mut row = |name: String, c: &OverlapCell| {
            out.write_record([
                name,
                self.epsilon.to_string(),
                c.n.to_string(),
                c.fraction_below.to_string(),
                c.fraction_above.to_string(),
                c.fraction_outside().to_string(),
            ])
        };
        row("all".into(), &self.overall)?;
        for (p, b, c) in &self.subgroups {
            row(format!("{p} {b}"), c)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    /// At `SUMMARY_QUANTILES`.
    pub quantiles: [f64; 5],
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        Some(Summary {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            sd: sample_variance(values).map_or(0.0, |v| v.max(0.0).sqrt()),
            quantiles: SUMMARY_QUANTILES.map(|q| quantile_sorted(&s, q).expect("non-empty")),
        })
    }
}

/// Effect summary per ventile 1..=20; `None` marks an empty ventile.
pub fn cate_by_ventile(taus: &[f64], ventiles: &[u8]) -> Result<Vec<(u8, Option<Summary>)>> {
    if taus.len() != ventiles.len() {
        return Err(Error::argument("effects and ventiles differ in length"));
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); N_VENTILES + 1];
    for (&t, &v) in taus.iter().zip(ventiles) {
        if !(1..=N_VENTILES as u8).contains(&v) {
            return Err(Error::argument(format!("ventile {v} out of range")));
        }
        groups[v as usize].push(t);
    }
    Ok((1..=N_VENTILES as u8)
        .map(|v| (v, Summary::of(&groups[v as usize])))
        .collect())
}

pub fn write_ventile_summaries<W: Write>(rows: &[(u8, Option<Summary>)], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["ventile", "n", "mean", "sd", "q05", "q25", "q50", "q75", "q95"])?;
    for (v, s) in rows {
        let mut rec = vec![v.to_string()];
        match s {
            Some(s) => {
                rec.push(s.n.to_string());
                rec.push(s.mean.to_string());
                rec.push(s.sd.to_string());
                rec.extend(s.quantiles.iter().map(|q| q.to_string()));
            }
            None => {
                rec.push("0".into());
                rec.extend(std::iter::repeat_n(String::new(), 7));
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Value fixed on the pseudo-profile: a number for numeric features, a
/// level name for categoricals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OverrideValue {
    Number(f64),
    Level(String),
}

/// One axis of a surface grid, bounded by training percentiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub feature: String,
    /// Lower and upper training percentiles in `[0, 100]`.
    pub percentiles: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub x: GridAxis,
    pub y: GridAxis,
    /// One surface per entry; an empty list gives a single surface on the
    /// unmodified profile.
    #[serde(default)]
    pub profiles: Vec<BTreeMap<String, OverrideValue>>,
}

impl SurfaceSpec {
    /// LAPS2DC over its 10th-90th percentiles against COPS2 over 0th-95th,
    /// for a heart-failure profile at ages 50 and 80.
    pub fn acuity_by_burden() -> Self {
        let profile = |age: f64| {
            BTreeMap::from([
                ("AGE".to_string(), OverrideValue::Number(age)),
                ("HCUPSGDC".to_string(), OverrideValue::Level("CHF".into())),
            ])
        };
        SurfaceSpec {
            x: GridAxis {
                feature: "LAPS2DC".into(),
                percentiles: (10.0, 90.0),
                points: 9,
            },
            y: GridAxis {
                feature: "COPS2".into(),
                percentiles: (0.0, 95.0),
                points: 9,
            },
            profiles: vec![profile(50.0), profile(80.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub feature_x: String,
    pub feature_y: String,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `tau[iy][ix]`.
    pub tau: Vec<Vec<f64>>,
    /// Design vector shared by every grid point apart from the two axes.
    pub profile: Vec<f64>,
    pub label: String,
}

fn numeric_column(schema: &Schema, name: &str) -> Result<usize> {
    let f = schema
        .feature(name)
        .ok_or_else(|| Error::argument(format!("unknown feature {name}")))?;
    if !matches!(f.kind, FeatureKind::Numeric) {
        return Err(Error::argument(format!("feature {name} is not numeric")));
    }
    Ok(schema.offset_of(name).expect("feature exists"))
}

/// Apply overrides to a copy of `base`.
pub fn profile_with(schema: &Schema, base: &[f64], overrides: &BTreeMap<String, OverrideValue>) -> Result<Vec<f64>> {
    let mut x = base.to_vec();
    for (name, value) in overrides {
        let f = schema
            .feature(name)
            .ok_or_else(|| Error::argument(format!("unknown feature {name}")))?;
        let off = schema.offset_of(name).expect("feature exists");
        match (&f.kind, value) {
            (FeatureKind::Numeric, OverrideValue::Number(v)) => x[off] = *v,
            (FeatureKind::Categorical { levels }, OverrideValue::Level(level)) => {
                let k = levels
                    .iter()
                    .position(|l| l == level)
                    .ok_or_else(|| Error::argument(format!("unknown level {level} of {name}")))?;
                x[off..off + levels.len()].fill(0.0);
                x[off + k] = 1.0;
            }
            (FeatureKind::Numeric, OverrideValue::Level(_)) => {
                return Err(Error::argument(format!("feature {name} needs a numeric override")))
            }
            (FeatureKind::Categorical { .. }, OverrideValue::Number(_)) => {
                return Err(Error::argument(format!("feature {name} needs a level name")))
            }
        }
    }
    Ok(x)
}

fn axis_values(model: &CausalForestModel, column: usize, axis: &GridAxis) -> Result<Vec<f64>> {
    let (lo, hi) = axis.percentiles;
    if !(0.0 <= lo && lo <= hi && hi <= 100.0) {
        return Err(Error::argument(format!(
            "percentile bounds of {} must satisfy 0 <= lo <= hi <= 100",
            axis.feature
        )));
    }
    if axis.points == 0 {
        return Err(Error::argument(format!("axis {} needs at least one point", axis.feature)));
    }
    let profile = model.profile();
    let a = profile.percentile(column, lo).expect("numeric column has percentiles");
    let b = profile.percentile(column, hi).expect("numeric column has percentiles");
    if axis.points == 1 {
        return Ok(vec![a]);
    }
    let step = (b - a) / (axis.points - 1) as f64;
    Ok((0..axis.points).map(|k| a + step * k as f64).collect())
}

/// Estimated effects over a two-feature grid, one grid per profile.
pub fn cate_surface(model: &CausalForestModel, spec: &SurfaceSpec) -> Result<Vec<SurfaceGrid>> {
    let schema = model.schema();
    let cx = numeric_column(schema, &spec.x.feature)?;
    let cy = numeric_column(schema, &spec.y.feature)?;
    let xs = axis_values(model, cx, &spec.x)?;
    let ys = axis_values(model, cy, &spec.y)?;
    let base = &model.profile().values;
    let default_profile = [BTreeMap::new()];
    let profiles: &[BTreeMap<String, OverrideValue>] = if spec.profiles.is_empty() {
        &default_profile
    } else {
        &spec.profiles
    };
    profiles
        .iter()
        .map(|overrides| {
            let profile = profile_with(schema, base, overrides)?;
            let tau = ys
                .par_iter()
                .map(|&yv| {
                    xs.iter()
                        .map(|&xv| {
                            let mut x = profile.clone();
                            x[cx] = xv;
                            x[cy] = yv;
                            model.predict_row(&x)
                        })
                        .collect()
                })
                .collect();
            let label = overrides
                .iter()
                .map(|(k, v)| match v {
                    OverrideValue::Number(n) => format!("{k}={n}"),
                    OverrideValue::Level(l) => format!("{k}={l}"),
                })
                .collect::<Vec<_>>()
                .join(";");
            Ok(SurfaceGrid {
                feature_x: spec.x.feature.clone(),
                feature_y: spec.y.feature.clone(),
                x_values: xs.clone(),
                y_values: ys.clone(),
                tau,
                profile,
                label: if label.is_empty() { "profile".into() } else { label },
            })
        })
        .collect()
}

pub fn write_surfaces<W: Write>(grids: &[SurfaceGrid], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["profile", "feature_x", "x", "feature_y", "y", "tau_hat"])?;
    for g in grids {
        for (iy, yv) in g.y_values.iter().enumerate() {
            for (ix, xv) in g.x_values.iter().enumerate() {
                out.write_record([
                    g.label.clone(),
                    g.feature_x.clone(),
                    xv.to_string(),
                    g.feature_y.clone(),
                    yv.to_string(),
                    g.tau[iy][ix].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosCell {
    pub ventile: u8,
    pub n_units: usize,
    pub n_readmitted: usize,
    /// Mean payoff of readmitted units; `None` without readmissions.
    pub mean_los: Option<f64>,
    /// Share of all readmissions; `None` without readmissions.
    pub readmission_share: Option<f64>,
}

/// Mean readmission length of stay and share of readmissions per ventile.
pub fn los_by_ventile(cohort: &Cohort) -> Vec<LosCell> {
    let mut sums = [(0usize, 0usize, 0.0f64); N_VENTILES + 1];
    for (u, &v) in cohort.units().iter().zip(cohort.ventiles()) {
        let s = &mut sums[v as usize];
        s.0 += 1;
        if u.y {
            s.1 += 1;
            s.2 += u.payoff;
        }
    }
    let total: usize = sums.iter().map(|s| s.1).sum();
    (1..=N_VENTILES)
        .map(|v| {
            let (n, r, los) = sums[v];
            LosCell {
                ventile: v as u8,
                n_units: n,
                n_readmitted: r,
                mean_los: (r > 0).then(|| los / r as f64),
                readmission_share: (r > 0).then(|| r as f64 / total as f64),
            }
        })
        .collect()
}

pub fn write_los<W: Write>(cells: &[LosCell], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["ventile", "n_units", "n_readmitted", "mean_los", "readmission_share"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for c in cells {
        out.write_record([
            c.ventile.to_string(),
            c.n_units.to_string(),
            c.n_readmitted.to_string(),
            opt(c.mean_los),
            opt(c.readmission_share),
        ])?;
    }
    out.flush()?;
    Ok(())
}
