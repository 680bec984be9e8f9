//! Synthetic cohorts with known effects.
//!
//! Covariates share two latent factors (acute severity and chronic burden)
//! so the scores, counts and categoricals are correlated the way hospital
//! records are. A prognostic index built from them drives the control-arm
//! readmission probability; the assignment risk score sees the same index
//! plus inputs that are not among the covariates, which keeps the
//! propensity bounded away from zero everywhere.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::cohort::{
    Cohort, FeatureSpec, Period, Provenance, Schema, Unit, ASSIGNMENT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EffectShape {
    /// Largest benefit at moderate prognosis, fading at high prognosis,
    /// turning positive for high discharge acuity.
    #[default]
    Mismatch,
    /// The same effect for every unit (`DGPConfig::constant_effect`).
    Constant,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PayoffShape {
    /// Readmission length of stay fixed at `payoff_mean` days.
    #[default]
    ConstantMean,
    /// Lognormal length of stay with mean near `payoff_mean`, rising
    /// slowly with prognosis.
    Lognormal,
}

/// Shape parameters of the generator. Defaults are tuned so the effect
/// signal, overlap and policy contrasts sit in a realistic regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeParams {
    /// Standard deviation of the prognostic index on the logit scale.
    pub prognostic_sd: f64,
    /// Right skew of the prognostic index (0 < skew; larger is more skewed).
    pub prognostic_skew: f64,
    /// Floor of the control-arm readmission probability.
    pub outcome_floor: f64,
    pub risk_intercept: f64,
    pub risk_slope: f64,
    /// Standard deviation of score inputs unrelated to the covariates.
    pub risk_noise_sd: f64,
    /// Share of units whose score is pushed up by unrecorded factors.
    pub risk_flag_rate: f64,
    /// Flagged scores centre on this risk and follow the prognostic index
    /// with slope `risk_flag_slope` instead of `risk_slope`.
    pub risk_flag_center: f64,
    pub risk_flag_slope: f64,
    /// Deepest effect (a negative absolute risk change).
    pub effect_depth: f64,
    /// Chronic burden (COPS2) band where the effect is deepest; the edges
    /// are logistic ramps of width `effect_band_scale`.
    pub effect_band_low: f64,
    pub effect_band_high: f64,
    pub effect_band_scale: f64,
    /// Effect added for very acute discharges.
    pub acuity_effect: f64,
    /// Discharge acuity score where the added effect reaches half size.
    pub acuity_midpoint: f64,
    pub acuity_scale: f64,
    pub constant_effect: f64,
    pub payoff_mean: f64,
    pub payoff_log_sd: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            prognostic_sd: 1.0,
            prognostic_skew: 1.0,
            outcome_floor: 0.035,
            risk_intercept: -2.4,
            risk_slope: 1.0,
            risk_noise_sd: 0.5,
            risk_flag_rate: 0.3,
            risk_flag_center: 0.5,
            risk_flag_slope: 0.2,
            effect_depth: -0.08,
            effect_band_low: 40.0,
            effect_band_high: 90.0,
            effect_band_scale: 5.0,
            acuity_effect: 0.03,
            acuity_midpoint: 62.0,
            acuity_scale: 4.0,
            constant_effect: -0.03,
            payoff_mean: 5.0,
            payoff_log_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DGPConfig {
    pub n: usize,
    /// Extra pure-noise numeric covariates.
    pub p_extra: usize,
    pub seed: u64,
    /// Target readmission probability among untreated units.
    pub baseline_rate: f64,
    pub post_fraction: f64,
    pub clusters: u32,
    pub effect_shape: EffectShape,
    pub payoff_shape: PayoffShape,
    pub shape: ShapeParams,
}

impl Default for DGPConfig {
    fn default() -> Self {
        DGPConfig {
            n: 20_000,
            p_extra: 0,
            seed: 1,
            baseline_rate: 0.124,
            post_fraction: 0.267,
            clusters: 21,
            effect_shape: EffectShape::Mismatch,
            payoff_shape: PayoffShape::ConstantMean,
            shape: ShapeParams::default(),
        }
    }
}

impl DGPConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::argument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        if self.n < 1 {
            return Err(Error::argument("n must be at least 1"));
        }
        if self.clusters < 1 {
            return Err(Error::argument("clusters must be at least 1"));
        }
        prob("baseline_rate", self.baseline_rate)?;
        prob("post_fraction", self.post_fraction)?;
        let s = &self.shape;
        prob("outcome_floor", s.outcome_floor)?;
        prob("risk_flag_center", s.risk_flag_center)?;
        if !(0.0..1.0).contains(&s.risk_flag_rate) {
            return Err(Error::argument("risk_flag_rate must lie in [0, 1)"));
        }
        if s.outcome_floor >= self.baseline_rate {
            return Err(Error::argument("outcome_floor must be below baseline_rate"));
        }
        for (name, v) in [
            ("prognostic_sd", s.prognostic_sd),
            ("risk_noise_sd", s.risk_noise_sd),
            ("prognostic_skew", s.prognostic_skew),
            ("effect_band_scale", s.effect_band_scale),
            ("acuity_scale", s.acuity_scale),
            ("payoff_mean", s.payoff_mean),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::argument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(s.payoff_log_sd >= 0.0) {
            return Err(Error::argument("payoff_log_sd must be nonnegative"));
        }
        if !(-1.0..=1.0).contains(&s.constant_effect) || !(-1.0..=0.0).contains(&s.effect_depth) {
            return Err(Error::argument("effects must lie on the probability scale"));
        }
        Ok(())
    }

    /// Same configuration with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        DGPConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Ground truth per unit, in cohort order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleColumns {
    pub true_tau: Vec<f64>,
    pub true_m: Vec<f64>,
    pub true_risk: Vec<f64>,
}

/// Cohort plus its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    pub oracle: OracleColumns,
    /// True propensity `P(W = 1 | x)` of each unit.
    pub true_propensity: Vec<f64>,
}

// Covariates of one unit before design-vector expansion.
struct Draw {
    age: f64,
    male: f64,
    code_status: f64,
    prior7: f64,
    prior8_30: f64,
    los: f64,
    medicare: f64,
    disposition: usize,
    laps2: f64,
    laps2dc: f64,
    cops2: f64,
    diagnosis: usize,
    noise: Vec<f64>,
}

// Relative frequencies of the diagnosis supergroups.
const DIAGNOSIS_WEIGHTS: [f64; 25] = [
    4.0, 3.0, 6.0, 0.5, 6.0, 1.0, 3.0, 3.0, 4.0, 2.0, 3.0, 2.0, 8.0, 3.0, 3.0, 7.0, 5.0, 6.0, 5.0,
    6.0, 4.0, 3.0, 8.0, 4.0, 4.0,
];
// Prognostic shift per supergroup (heart failure, renal failure, sepsis and
// malignancy readmit more).
const DIAGNOSIS_SHIFT: [f64; 25] = [
    0.0, 0.1, 0.0, 0.2, 0.35, 0.1, 0.0, 0.05, 0.1, 0.1, 0.35, -0.1, -0.15, 0.1, 0.15, -0.05, 0.0,
    -0.2, 0.1, 0.0, 0.3, -0.1, 0.15, -0.2, -0.05,
];

fn round_clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.round().clamp(lo, hi)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn draw_covariates<R: Rng>(rng: &mut R, p_extra: usize) -> Draw {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = || std.sample(rng);
    let acute = z();
    let chronic = z();
    let (e1, e2, e3, e4, e5) = (z(), z(), z(), z(), z());
    let age = round_clamp(65.0 + 15.0 * (0.35 * chronic + 0.94 * e1), 18.0, 100.0);
    let laps2 = round_clamp(58.6 + 28.0 * (0.7 * acute + 0.71 * e2), 0.0, 250.0);
    let laps2dc = round_clamp(46.7 + 18.0 * (0.6 * acute + 0.8 * e3), 0.0, 200.0);
    let cops2 = round_clamp(45.6 + 35.0 * (0.8 * chronic + 0.6 * e4), 0.0, 300.0);
    let los_rate = 3.8 * (0.25 * acute + 0.1 * e5).exp();
    let noise: Vec<f64> = (0..p_extra).map(|_| (z() * 100.0).round() / 100.0).collect();

    let male = f64::from(u8::from(rng.random::<f64>() < 0.475));
    let age_c = (age - 65.0) / 15.0;
    let no_full_code = rng.random::<f64>() < logistic(-1.9 + 0.5 * chronic + 0.6 * age_c);
    let code_status = if no_full_code {
        f64::from(rng.random_range(1..=3u8))
    } else {
        0.0
    };
    let prior7 = Poisson::new(0.04 * (0.6 * acute).exp()).expect("rate").sample(rng).min(5.0);
    let prior8_30 = Poisson::new(0.15 * (0.6 * chronic).exp()).expect("rate").sample(rng).min(10.0);
    let los = (1.0 + Poisson::new(los_rate).expect("rate").sample(rng)).min(30.0);
    let medicare = f64::from(u8::from(rng.random::<f64>() < logistic(-0.4 + 1.6 * age_c)));
    let frail = 0.5 * age_c + 0.4 * acute + 0.3 * chronic;
    let p_home_health = logistic(-1.9 + 0.8 * frail);
    let p_snf = logistic(-2.6 + 1.0 * frail);
    let u: f64 = rng.random();
    let disposition = if u < p_snf {
        2
    } else if u < p_snf + p_home_health {
        1
    } else {
        0
    };
    let total: f64 = DIAGNOSIS_WEIGHTS.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut diagnosis = DIAGNOSIS_WEIGHTS.len() - 1;
    for (k, w) in DIAGNOSIS_WEIGHTS.iter().enumerate() {
        if pick < *w {
            diagnosis = k;
            break;
        }
        pick -= w;
    }
    Draw {
        age,
        male,
        code_status,
        prior7,
        prior8_30,
        los,
        medicare,
        disposition,
        laps2,
        laps2dc,
        cops2,
        diagnosis,
        noise,
    }
}

impl Draw {
    fn design(&self) -> Vec<f64> {
        let mut x = vec![
            self.age,
            self.male,
            self.code_status,
            self.prior7,
            self.prior8_30,
            self.los,
            self.medicare,
        ];
        let mut disp = [0.0; 3];
        disp[self.disposition] = 1.0;
        x.extend(disp);
        x.extend([self.laps2, self.laps2dc, self.cops2]);
        let mut diag = [0.0; 25];
        diag[self.diagnosis] = 1.0;
        x.extend(diag);
        x.extend(&self.noise);
        x
    }

    /// Linear prognostic composite before standardization.
    fn prognostic(&self) -> f64 {
        0.9 * (self.cops2 - 45.6) / 35.0
            + 0.35 * (self.laps2dc - 46.7) / 18.0
            + 0.05 * (self.laps2 - 58.6) / 28.0
            + 0.15 * self.prior8_30
            + 0.2 * self.prior7
            + 0.1 * (self.age - 65.0) / 15.0
            + 0.1 * f64::from(u8::from(self.disposition > 0))
            + 0.05 * (self.los - 4.8) / 3.0
            + 0.05 * f64::from(u8::from(self.code_status > 0.0))
            + 0.5 * DIAGNOSIS_SHIFT[self.diagnosis]
    }
}

const PILOT_SEED: u64 = 0x5EED_CA1B;
const PILOT_SIZE: usize = 40_000;

/// Deterministic functions of the covariates shared by all seeds of a
/// configuration.
struct Truth {
    composite_mean: f64,
    composite_sd: f64,
    intercept: f64,
    shape: ShapeParams,
    effect_shape: EffectShape,
}

impl Truth {
    /// Standardize the composite, then skew it right: most units sit in a
    /// compact low-risk bulk with a long high-risk tail.
    fn index_of(shape: &ShapeParams, mean: f64, sd: f64, d: &Draw) -> f64 {
        let z = (d.prognostic() - mean) / sd;
        let k = shape.prognostic_skew;
        let m = (0.5 * k * k).exp();
        let v = ((k * k).exp() - 1.0) * (k * k).exp();
        shape.prognostic_sd * ((k * z).exp() - m) / v.sqrt()
    }

    fn index(&self, d: &Draw) -> f64 {
        Self::index_of(&self.shape, self.composite_mean, self.composite_sd, d)
    }

    fn control_probability(shape: &ShapeParams, intercept: f64, index: f64) -> f64 {
        shape.outcome_floor + (1.0 - shape.outcome_floor) * logistic(intercept + index)
    }

    fn m(&self, index: f64) -> f64 {
        Self::control_probability(&self.shape, self.intercept, index)
    }

    fn risk_mean_logit(shape: &ShapeParams, index: f64, flagged: bool) -> f64 {
        if flagged {
            logit(shape.risk_flag_center) + shape.risk_flag_slope * index
        } else {
            shape.risk_intercept + shape.risk_slope * index
        }
    }

    /// `P(risk >= threshold | x)` under the flagged/unflagged mixture.
    fn above_threshold(shape: &ShapeParams, index: f64) -> f64 {
        let sd = StdNormal::new(0.0, shape.risk_noise_sd).expect("positive sd");
        let above = |flagged| {
            1.0 - sd.cdf(logit(ASSIGNMENT_THRESHOLD) - Self::risk_mean_logit(shape, index, flagged))
        };
        let q = shape.risk_flag_rate;
        q * above(true) + (1.0 - q) * above(false)
    }

    fn tau(&self, d: &Draw, m: f64) -> f64 {
        let s = &self.shape;
        let raw = match self.effect_shape {
            EffectShape::Null => 0.0,
            EffectShape::Constant => s.constant_effect,
            EffectShape::Mismatch => {
                let band = logistic((d.cops2 - s.effect_band_low) / s.effect_band_scale)
                    * logistic((s.effect_band_high - d.cops2) / s.effect_band_scale);
                let trough = s.effect_depth * band;
                let acuity =
                    s.acuity_effect * logistic((d.laps2dc - s.acuity_midpoint) / s.acuity_scale);
                trough + acuity
            }
        };
        raw.clamp(-m, 1.0 - m)
    }
}

/// Fix the composite's standardization and calibrate the outcome intercept
/// so that the untreated readmission rate matches `baseline_rate`, on a
/// pilot sample that does not depend on the configured seed.
fn calibrate(config: &DGPConfig) -> Truth {
    let mut rng = stream(PILOT_SEED, Domain::Calibration, 0);
    let draws: Vec<Draw> = (0..PILOT_SIZE).map(|_| draw_covariates(&mut rng, 0)).collect();
    let composite: Vec<f64> = draws.iter().map(Draw::prognostic).collect();
    let mean = composite.iter().sum::<f64>() / PILOT_SIZE as f64;
    let sd = (composite.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
        / (PILOT_SIZE - 1) as f64)
        .sqrt();
    let shape = &config.shape;
    let pilot: Vec<(f64, f64)> = draws
        .iter()
        .map(|d| {
            let index = Truth::index_of(shape, mean, sd, d);
            let untreated = 1.0 - config.post_fraction * Truth::above_threshold(shape, index);
            (index, untreated)
        })
        .collect();
    let weight: f64 = pilot.iter().map(|p| p.1).sum();
    let rate = |a: f64| {
        pilot
            .iter()
            .map(|&(s, w)| w * Truth::control_probability(shape, a, s))
            .sum::<f64>()
            / weight
    };
    let (mut lo, mut hi) = (-15.0, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < config.baseline_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Truth {
        composite_mean: mean,
        composite_sd: sd,
        intercept: 0.5 * (lo + hi),
        shape: shape.clone(),
        effect_shape: config.effect_shape,
    }
}

/// Readmission-schema cohort with `p_extra` noise covariates.
pub fn synthetic_schema(config: &DGPConfig) -> Schema {
    Schema::readmission_with_noise(config.p_extra)
}

// Unequal hospital sizes.
fn cluster_of<R: Rng>(rng: &mut R, clusters: u32) -> u32 {
    let weights: Vec<f64> = (0..clusters).map(|c| 1.0 + 0.15 * f64::from(c % 7)).collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    for (c, w) in weights.iter().enumerate() {
        if pick < *w {
            return c as u32 + 1;
        }
        pick -= w;
    }
    clusters
}

pub fn generate(config: &DGPConfig) -> Result<SyntheticCohort> {
    config.validate()?;
    let truth = calibrate(config);
    let risk_noise = Normal::new(0.0, config.shape.risk_noise_sd).expect("positive sd");
    let rows: Vec<(Unit, f64, f64, f64)> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, Domain::Covariates, i as u64);
            let d = draw_covariates(&mut rng, config.p_extra);
            let cluster_id = cluster_of(&mut rng, config.clusters);
            let index = truth.index(&d);
            let m = truth.m(index);
            let tau = truth.tau(&d, m);
            let e = config.post_fraction * Truth::above_threshold(&truth.shape, index);

            let mut rng = stream(config.seed, Domain::Outcome, i as u64);
            let period = if rng.random::<f64>() < config.post_fraction {
                Period::Post
            } else {
                Period::Pre
            };
            let flagged = rng.random::<f64>() < truth.shape.risk_flag_rate;
            let risk = logistic(
                Truth::risk_mean_logit(&truth.shape, index, flagged) + risk_noise.sample(&mut rng),
            );
            let w = period == Period::Post && risk >= ASSIGNMENT_THRESHOLD;
            let p = (m + if w { tau } else { 0.0 }).clamp(0.0, 1.0);
            let y = rng.random::<f64>() < p;
            let payoff = if !y {
                0.0
            } else {
                let s = &truth.shape;
                match config.payoff_shape {
                    PayoffShape::ConstantMean => s.payoff_mean,
                    PayoffShape::Lognormal => {
                        let mean = s.payoff_mean * (0.08 * index).exp();
                        let mu = mean.ln() - 0.5 * s.payoff_log_sd * s.payoff_log_sd;
                        let draw = LogNormal::new(mu, s.payoff_log_sd)
                            .expect("valid lognormal")
                            .sample(&mut rng);
                        (draw * 10.0).round().max(1.0) / 10.0
                    }
                }
            };
            let unit = Unit {
                unit_id: i as u64 + 1,
                x: d.design(),
                w,
                y,
                risk,
                period,
                cluster_id,
                payoff,
            };
            (unit, tau, m, e)
        })
        .collect();

    let mut units = Vec::with_capacity(rows.len());
    let mut oracle = OracleColumns::default();
    let mut true_propensity = Vec::with_capacity(rows.len());
    for (u, tau, m, e) in rows {
        oracle.true_tau.push(tau);
        oracle.true_m.push(m);
        oracle.true_risk.push(u.risk);
        true_propensity.push(e);
        units.push(u);
    }
    let cohort = Cohort::new(synthetic_schema(config), units, Provenance::ObservationalThreshold)?;
    Ok(SyntheticCohort {
        cohort,
        oracle,
        true_propensity,
    })
}

/// Readmissions prevented under the true effects: `-sum(true_tau)` over the
/// treated unit ids.
pub fn oracle_policy_value(synthetic: &SyntheticCohort, treated: &[u64]) -> Result<f64> {
    let rows = synthetic.cohort.positions_of(treated)?;
    Ok(-rows.iter().map(|&r| synthetic.oracle.true_tau[r]).sum::<f64>())
}

/// Path of the oracle file written next to a cohort CSV:
/// `cohort.csv` becomes `cohort_oracle.csv`.
pub fn oracle_path(cohort_path: &Path) -> PathBuf {
    let stem = cohort_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cohort".into());
    cohort_path.with_file_name(format!("{stem}_oracle.csv"))
}

pub fn write_oracle<W: Write>(synthetic: &SyntheticCohort, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["unit_id", "TRUE_TAU", "TRUE_M", "TRUE_RISK"])?;
    let o = &synthetic.oracle;
    for (k, u) in synthetic.cohort.units().iter().enumerate() {
        out.write_record([
            u.unit_id.to_string(),
            o.true_tau[k].to_string(),
            o.true_m[k].to_string(),
            o.true_risk[k].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Write the cohort CSV and its sibling oracle CSV.
pub fn export_synthetic(synthetic: &SyntheticCohort, cohort_path: impl AsRef<Path>) -> Result<PathBuf> {
    let cohort_path = cohort_path.as_ref();
    crate::cohort::export_cohort(&synthetic.cohort, cohort_path)?;
    let path = oracle_path(cohort_path);
    write_oracle(synthetic, BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

fn toy_schema(p: usize) -> Schema {
    Schema::new((1..=p).map(|k| FeatureSpec::numeric(format!("X{k}"))).collect())
        .expect("distinct names")
}

/// Confounded design on five uniform covariates: treatment probability and
/// baseline outcome both rise with `X1`, the effect is a constant
/// `effect`. Returned oracle risk holds the true propensity.
pub fn generate_confounded(n: usize, seed: u64, effect: f64) -> Result<SyntheticCohort> {
    if n < 1 {
        return Err(Error::argument("n must be at least 1"));
    }
    let rows: Vec<(Unit, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Covariates, i as u64);
            let x: Vec<f64> = (0..5).map(|_| (rng.random::<f64>() * 100.0).round() / 100.0).collect();
            let e = 0.1 + 0.8 * x[0];
            let m = 0.1 + 0.6 * x[0] + 0.1 * x[1];
            let w = rng.random::<f64>() < e;
            let y = rng.random::<f64>() < m + if w { effect } else { 0.0 };
            let unit = Unit {
                unit_id: i as u64 + 1,
                x,
                w,
                y,
                risk: e,
                period: Period::Post,
                cluster_id: 1 + (i % 10) as u32,
                payoff: if y { 5.0 } else { 0.0 },
            };
            (unit, m, e)
        })
        .collect();
    let mut synthetic = from_rows(toy_schema(5), rows, |_| effect)?;
    synthetic.oracle.true_risk = synthetic.true_propensity.clone();
    Ok(synthetic)
}

/// Deterministic assignment `W = 1{X1 > 0.5}` on uniform covariates.
pub fn generate_deterministic(n: usize, seed: u64) -> Result<SyntheticCohort> {
    if n < 1 {
        return Err(Error::argument("n must be at least 1"));
    }
    let rows: Vec<(Unit, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Covariates, i as u64);
            let x: Vec<f64> = (0..3).map(|_| (rng.random::<f64>() * 1000.0).round() / 1000.0).collect();
            let w = x[0] > 0.5;
            let m = 0.1 + 0.1 * x[1];
            let y = rng.random::<f64>() < m;
            let unit = Unit {
                unit_id: i as u64 + 1,
                x: x.clone(),
                w,
                y,
                risk: x[0],
                period: Period::Post,
                cluster_id: 1,
                payoff: if y { 5.0 } else { 0.0 },
            };
            (unit, m, f64::from(u8::from(w)))
        })
        .collect();
    from_rows(toy_schema(3), rows, |_| 0.0)
}

fn from_rows(schema: Schema, rows: Vec<(Unit, f64, f64)>, tau: impl Fn(&Unit) -> f64) -> Result<SyntheticCohort> {
    let mut oracle = OracleColumns::default();
    let mut true_propensity = Vec::new();
    let mut units = Vec::new();
    for (u, m, e) in rows {
        oracle.true_tau.push(tau(&u));
        oracle.true_m.push(m);
        oracle.true_risk.push(u.risk);
        true_propensity.push(e);
        units.push(u);
    }
    Ok(SyntheticCohort {
        cohort: Cohort::new(schema, units, Provenance::Synthetic)?,
        oracle,
        true_propensity,
    })
}
