//! Hospitalization records, ventile stratification, the period × risk-band
//! partition and covariate balance.

pub mod io;
mod schema;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{export_cohort, load_cohort, load_cohort_as, write_cohort};
pub use schema::{
    FeatureKind, FeatureSpec, Schema, DISCHDISP_LEVELS, HCUPSGDC_LEVELS, NUMERIC_COVARIATES,
};

use crate::error::{Error, Result};

/// Risk cutoff that assigns the intervention during the post period.
pub const ASSIGNMENT_THRESHOLD: f64 = 0.25;

pub const N_VENTILES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Pre,
    Post,
}

impl Period {
    pub fn as_str(self) -> &'static str {
        match self {
            Period::Pre => "pre",
            Period::Post => "post",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskBand {
    Below,
    AtOrAbove,
}

impl RiskBand {
    pub fn of(risk: f64) -> Self {
        if risk >= ASSIGNMENT_THRESHOLD {
            RiskBand::AtOrAbove
        } else {
            RiskBand::Below
        }
    }
}

impl fmt::Display for RiskBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskBand::Below => f.write_str("<25"),
            RiskBand::AtOrAbove => f.write_str(">=25"),
        }
    }
}

/// Where a cohort came from. Observational-threshold cohorts must obey the
/// assignment rule `w = 1 => period = post and risk >= 0.25`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ObservationalThreshold,
    Synthetic,
    External,
}

/// One hospitalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub unit_id: u64,
    /// Expanded design vector (numeric columns then one-hot blocks, in
    /// schema order).
    pub x: Vec<f64>,
    pub w: bool,
    pub y: bool,
    pub risk: f64,
    pub period: Period,
    pub cluster_id: u32,
    /// Length of stay of the readmission, zero when there was none.
    pub payoff: f64,
}

/// Immutable collection of units sharing one schema.
#[derive(Debug, Clone)]
pub struct Cohort {
    schema: Schema,
    units: Vec<Unit>,
    ventiles: Vec<u8>,
    provenance: Provenance,
    index: HashMap<u64, usize>,
}

/// Ventile of a predicted risk: `floor(20 * risk) + 1`, with `risk = 1`
/// clamped into V20.
pub fn ventile_of(risk: f64) -> u8 {
    let v = (risk * N_VENTILES as f64).floor() as i64 + 1;
    v.clamp(1, N_VENTILES as i64) as u8
}

/// Ventile index (1..=20) of every unit.
pub fn assign_ventiles(cohort: &Cohort) -> Vec<u8> {
    cohort.units.iter().map(|u| ventile_of(u.risk)).collect()
}

impl Cohort {
    pub fn new(schema: Schema, units: Vec<Unit>, provenance: Provenance) -> Result<Self> {
        let width = schema.n_columns();
        let mut index = HashMap::with_capacity(units.len());
        for (row, u) in units.iter().enumerate() {
            if u.x.len() != width {
                return Err(Error::value(
                    row + 1,
                    format!("design vector has {} columns, schema needs {width}", u.x.len()),
                ));
            }
            if !(0.0..=1.0).contains(&u.risk) {
                return Err(Error::value(row + 1, format!("risk {} outside [0, 1]", u.risk)));
            }
            if !(u.payoff >= 0.0) || !u.payoff.is_finite() {
                return Err(Error::value(row + 1, format!("payoff {} is negative", u.payoff)));
            }
            if u.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::value(row + 1, "non-finite covariate"));
            }
            if provenance == Provenance::ObservationalThreshold
                && u.w
                && (u.period != Period::Post || u.risk < ASSIGNMENT_THRESHOLD)
            {
                return Err(Error::value(
                    row + 1,
                    "treated unit violates the post-period risk-threshold assignment rule",
                ));
            }
            if index.insert(u.unit_id, row).is_some() {
                return Err(Error::value(row + 1, format!("duplicate unit_id {}", u.unit_id)));
            }
        }
        let ventiles = units.iter().map(|u| ventile_of(u.risk)).collect();
        Ok(Cohort {
            schema,
            units,
            ventiles,
            provenance,
            index,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn ventiles(&self) -> &[u8] {
        &self.ventiles
    }

    /// Row position of a unit id.
    pub fn position(&self, unit_id: u64) -> Option<usize> {
        self.index.get(&unit_id).copied()
    }

    pub fn unit_ids(&self) -> Vec<u64> {
        self.units.iter().map(|u| u.unit_id).collect()
    }

    /// One design column across all units.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.units.iter().map(|u| u.x[j]).collect()
    }

    pub fn treatment(&self) -> Vec<f64> {
        self.units.iter().map(|u| if u.w { 1.0 } else { 0.0 }).collect()
    }

    pub fn outcome(&self) -> Vec<f64> {
        self.units.iter().map(|u| if u.y { 1.0 } else { 0.0 }).collect()
    }

    pub fn n_clusters(&self) -> usize {
        let mut ids: Vec<u32> = self.units.iter().map(|u| u.cluster_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Sub-cohort of the given row positions, keeping unit ids.
    pub fn select(&self, rows: &[usize]) -> Result<Cohort> {
        let units = rows
            .iter()
            .map(|&r| {
                self.units
                    .get(r)
                    .cloned()
                    .ok_or_else(|| Error::argument(format!("row {r} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Cohort::new(self.schema.clone(), units, self.provenance)
    }

    pub(crate) fn positions_of(&self, ids: &[u64]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.position(*id)
                    .ok_or_else(|| Error::argument(format!("unknown unit id {id}")))
            })
            .collect()
    }
}

/// The four subgroups indexed by period and risk band.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroups {
    groups: BTreeMap<(Period, RiskBand), Vec<u64>>,
}

impl Subgroups {
    pub fn get(&self, period: Period, band: RiskBand) -> &[u64] {
        self.groups
            .get(&(period, band))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Period, RiskBand), &Vec<u64>)> {
        self.groups.iter()
    }

    pub fn total(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }
}

pub const SUBGROUP_KEYS: [(Period, RiskBand); 4] = [
    (Period::Pre, RiskBand::Below),
    (Period::Pre, RiskBand::AtOrAbove),
    (Period::Post, RiskBand::Below),
    (Period::Post, RiskBand::AtOrAbove),
];

pub fn partition_subgroups(cohort: &Cohort) -> Subgroups {
    let mut groups: BTreeMap<(Period, RiskBand), Vec<u64>> =
        SUBGROUP_KEYS.iter().map(|k| (*k, Vec::new())).collect();
    for u in &cohort.units {
        groups
            .get_mut(&(u.period, RiskBand::of(u.risk)))
            .expect("all keys present")
            .push(u.unit_id);
    }
    Subgroups { groups }
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Standardized mean difference of one design column between two unit
/// sets, using the average of the two sample variances.
///
/// Zero pooled variance yields 0 for equal means and a signed infinity
/// otherwise.
pub fn smd(cohort: &Cohort, feature: &str, group_a: &[u64], group_b: &[u64]) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::argument("standardized mean difference needs two non-empty groups"));
    }
    let j = cohort
        .schema
        .column_index(feature)
        .ok_or_else(|| Error::argument(format!("{feature} is not a numeric design column")))?;
    let take = |ids: &[u64]| -> Result<Vec<f64>> {
        Ok(cohort
            .positions_of(ids)?
            .into_iter()
            .map(|r| cohort.units[r].x[j])
            .collect())
    };
    let (ma, va) = mean_var(&take(group_a)?);
    let (mb, vb) = mean_var(&take(group_b)?);
    let pooled = ((va + vb) / 2.0).sqrt();
    if pooled == 0.0 {
        return Ok(if ma == mb {
            0.0
        } else if ma > mb {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok((ma - mb) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_schema() -> Schema {
        Schema::new(vec![
            FeatureSpec::numeric("A"),
            FeatureSpec::categorical("C", &["u", "v"]),
        ])
        .unwrap()
    }

    fn unit(id: u64, a: f64, risk: f64, period: Period) -> Unit {
        Unit {
            unit_id: id,
            x: vec![a, 1.0, 0.0],
            w: false,
            y: false,
            risk,
            period,
            cluster_id: 1,
            payoff: 0.0,
        }
    }

    #[test]
    fn ventile_boundaries() {
        assert_eq!(ventile_of(0.0), 1);
        assert_eq!(ventile_of(0.049), 1);
        assert_eq!(ventile_of(0.25), 6);
        assert_eq!(ventile_of(0.2499), 5);
        assert_eq!(ventile_of(0.95), 20);
        assert_eq!(ventile_of(1.0), 20);
    }

    #[test]
    fn subgroup_membership() {
        let c = Cohort::new(
            toy_schema(),
            vec![
                unit(1, 0.0, 0.30, Period::Pre),
                unit(2, 0.0, 0.10, Period::Pre),
                unit(3, 0.0, 0.25, Period::Post),
            ],
            Provenance::External,
        )
        .unwrap();
        let g = partition_subgroups(&c);
        assert_eq!(g.get(Period::Pre, RiskBand::AtOrAbove), &[1]);
        assert_eq!(g.get(Period::Pre, RiskBand::Below), &[2]);
        assert_eq!(g.get(Period::Post, RiskBand::AtOrAbove), &[3]);
        assert!(g.get(Period::Post, RiskBand::Below).is_empty());
        assert_eq!(g.total(), 3);
    }

    #[test]
    fn low_risk_cohort_has_empty_high_bands() {
        let c = Cohort::new(
            toy_schema(),
            (0..10).map(|i| unit(i, 0.0, 0.01 * i as f64, if i % 2 == 0 { Period::Pre } else { Period::Post })).collect(),
            Provenance::External,
        )
        .unwrap();
        let g = partition_subgroups(&c);
        assert!(g.get(Period::Pre, RiskBand::AtOrAbove).is_empty());
        assert!(g.get(Period::Post, RiskBand::AtOrAbove).is_empty());
        assert_eq!(g.total(), 10);
    }

    #[test]
    fn smd_arithmetic() {
        // group a: {0, 2} mean 1 var 2 ; group b: {-1, 1} mean 0 var 2
        let units = vec![
            unit(1, 0.0, 0.1, Period::Pre),
            unit(2, 2.0, 0.1, Period::Pre),
            unit(3, -1.0, 0.1, Period::Post),
            unit(4, 1.0, 0.1, Period::Post),
        ];
        let c = Cohort::new(toy_schema(), units, Provenance::External).unwrap();
        let d = smd(&c, "A", &[1, 2], &[3, 4]).unwrap();
        assert!((d - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(smd(&c, "A", &[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(smd(&c, "C[u]", &[1], &[3]).unwrap(), 0.0);
        assert!(smd(&c, "A", &[], &[3]).is_err());
        assert_eq!(smd(&c, "A", &[2], &[3]).unwrap(), f64::INFINITY);
        assert_eq!(smd(&c, "A", &[3], &[2]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn smd_unit_difference() {
        // means 1 vs 0, both sample variances exactly 1
        let a = [0.0, 1.0, 2.0];
        let b = [-1.0, 0.0, 1.0];
        let mut units = Vec::new();
        for (k, v) in a.iter().chain(b.iter()).enumerate() {
            units.push(unit(k as u64, *v, 0.1, Period::Pre));
        }
        let c = Cohort::new(toy_schema(), units, Provenance::External).unwrap();
        assert!((smd(&c, "A", &[0, 1, 2], &[3, 4, 5]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_provenance_enforced() {
        let mut u = unit(1, 0.0, 0.10, Period::Post);
        u.w = true;
        let err = Cohort::new(toy_schema(), vec![u.clone()], Provenance::ObservationalThreshold);
        assert!(err.is_err());
        assert!(Cohort::new(toy_schema(), vec![u], Provenance::External).is_ok());
    }
}
