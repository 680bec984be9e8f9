//! Best-linear-predictor calibration of out-of-bag effect estimates.
//!
//! `Y - m(x)` is regressed without intercept on
//! `A = mean_tau * (W - e(x))` and `B = (tau_hat - mean_tau) * (W - e(x))`.
//! `alpha` near 1 says the average effect is right; `beta` near 1 says the
//! spread of the estimates tracks real heterogeneity, and a one-sided test
//! of `beta > 0` is the omnibus heterogeneity test.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::forest::TauEstimate;

/// Sandwich covariance used for the standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    /// Heteroskedasticity-robust with leverage correction.
    #[default]
    Hc3,
    /// Cluster-robust by hospital, with the small-sample factor
    /// `G/(G-1) * (n-1)/(n-k)`.
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub covariance: Covariance,
    /// Units whose propensity falls outside this open interval are dropped.
    pub propensity_bounds: (f64, f64),
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            covariance: Covariance::Hc3,
            propensity_bounds: (0.01, 0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub alpha: f64,
    /// `None` when the heterogeneity regressor is degenerate.
    pub beta: Option<f64>,
    pub se_alpha: f64,
    pub se_beta: Option<f64>,
    /// Two-sided p-value for `alpha = 0`.
    pub p_alpha: f64,
    /// One-sided p-value for `beta > 0`.
    pub p_beta: Option<f64>,
    pub n_used: usize,
    /// Dropped because no tree left them out.
    pub n_excluded_oob: usize,
    /// Dropped for propensity outside the bounds.
    pub n_excluded_propensity: usize,
    pub mean_tau: f64,
    pub degenerate: bool,
    pub covariance: Covariance,
    pub df: f64,
}

/// Mean of the valid out-of-bag estimates.
pub fn mean_oob_tau(taus: &[TauEstimate]) -> Result<f64> {
    let valid: Vec<f64> = taus.iter().filter(|t| t.is_valid()).map(|t| t.tau_hat).collect();
    if valid.is_empty() {
        return Err(Error::Estimation("no unit has a valid out-of-bag estimate".into()));
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

struct Design {
    a: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
    cluster: Vec<u32>,
}

pub fn best_linear_predictor(
    cohort: &Cohort,
    taus: &[TauEstimate],
    oob_m: &[f64],
    oob_e: &[f64],
    options: &CalibrationOptions,
) -> Result<CalibrationReport> {
    let n = cohort.len();
    if taus.len() != n || oob_m.len() != n || oob_e.len() != n {
        return Err(Error::argument(format!(
            "calibration inputs must cover all {n} units (got {}, {}, {})",
            taus.len(),
            oob_m.len(),
            oob_e.len()
        )));
    }
    let (lo, hi) = options.propensity_bounds;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::argument("propensity bounds must satisfy 0 <= lo < hi <= 1"));
    }

    let mut n_excluded_oob = 0;
    let mut n_excluded_propensity = 0;
    let mut used = Vec::with_capacity(n);
    for i in 0..n {
        if !taus[i].is_valid() {
            n_excluded_oob += 1;
        } else if !(oob_e[i] > lo && oob_e[i] < hi) {
            n_excluded_propensity += 1;
        } else {
            used.push(i);
        }
    }
    if used.len() < 3 {
        return Err(Error::Estimation(format!(
            "only {} units usable for calibration",
            used.len()
        )));
    }
    let mean_tau = used.iter().map(|&i| taus[i].tau_hat).sum::<f64>() / used.len() as f64;

    let units = cohort.units();
    let mut design = Design {
        a: Vec::with_capacity(used.len()),
        b: Vec::with_capacity(used.len()),
        r: Vec::with_capacity(used.len()),
        cluster: Vec::with_capacity(used.len()),
    };
    for &i in &used {
        let u = &units[i];
        let wr = f64::from(u8::from(u.w)) - oob_e[i];
        design.a.push(mean_tau * wr);
        design.b.push((taus[i].tau_hat - mean_tau) * wr);
        design.r.push(f64::from(u8::from(u.y)) - oob_m[i]);
        design.cluster.push(u.cluster_id);
    }

    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let saa = dot(&design.a, &design.a);
    let sbb = dot(&design.b, &design.b);
    let sab = dot(&design.a, &design.b);
    if !(saa > 0.0) {
        return Err(Error::Estimation(
            "average-effect regressor is identically zero (mean effect or treatment residuals vanish)"
                .into(),
        ));
    }
    let det = saa * sbb - sab * sab;
    let degenerate = !(sbb > 0.0) || det <= 1e-10 * saa * sbb;

    let report = if degenerate {
        let x = [design.a.as_slice()];
        let xtx_inv = [[1.0 / saa]];
        let coef = [dot(&design.a, &design.r) / saa];
        let (cov, df) = sandwich(&x, &design, &coef, &xtx_inv, options.covariance);
        let se_alpha = cov[0][0].max(0.0).sqrt();
        CalibrationReport {
            alpha: coef[0],
            beta: None,
            se_alpha,
            se_beta: None,
            p_alpha: two_sided(coef[0], se_alpha, df),
            p_beta: None,
            n_used: used.len(),
            n_excluded_oob,
            n_excluded_propensity,
            mean_tau,
            degenerate,
            covariance: options.covariance,
            df,
        }
    } else {
        let x = [design.a.as_slice(), design.b.as_slice()];
        let xtx_inv = [[sbb / det, -sab / det], [-sab / det, saa / det]];
        let ar = dot(&design.a, &design.r);
        let br = dot(&design.b, &design.r);
        let coef = [
            xtx_inv[0][0] * ar + xtx_inv[0][1] * br,
            xtx_inv[1][0] * ar + xtx_inv[1][1] * br,
        ];
        let (cov, df) = sandwich(&x, &design, &coef, &xtx_inv, options.covariance);
        let se_alpha = cov[0][0].max(0.0).sqrt();
        let se_beta = cov[1][1].max(0.0).sqrt();
        CalibrationReport {
            alpha: coef[0],
            beta: Some(coef[1]),
            se_alpha,
            se_beta: Some(se_beta),
            p_alpha: two_sided(coef[0], se_alpha, df),
            p_beta: Some(upper_tail(coef[1], se_beta, df)),
            n_used: used.len(),
            n_excluded_oob,
            n_excluded_propensity,
            mean_tau,
            degenerate,
            covariance: options.covariance,
            df,
        }
    };
    Ok(report)
}

/// `(X'X)^-1 M (X'X)^-1` for `k` regressors, with its t degrees of freedom.
fn sandwich<const K: usize>(
    x: &[&[f64]; K],
    design: &Design,
    coef: &[f64; K],
    xtx_inv: &[[f64; K]; K],
    kind: Covariance,
) -> ([[f64; K]; K], f64) {
    let n = design.r.len();
    let row = |i: usize| -> [f64; K] { std::array::from_fn(|j| x[j][i]) };
    let resid = |i: usize, xi: &[f64; K]| design.r[i] - (0..K).map(|j| coef[j] * xi[j]).sum::<f64>();
    let mut meat = [[0.0; K]; K];
    let df;
    match kind {
        Covariance::Hc3 => {
            for i in 0..n {
                let xi = row(i);
                let e = resid(i, &xi);
                let mut h = 0.0;
                for p in 0..K {
                    for q in 0..K {
                        h += xi[p] * xtx_inv[p][q] * xi[q];
                    }
                }
                let scale = if h < 1.0 { e / (1.0 - h) } else { 0.0 };
                let s2 = scale * scale;
                for p in 0..K {
                    for q in 0..K {
                        meat[p][q] += s2 * xi[p] * xi[q];
                    }
                }
            }
            df = (n - K) as f64;
        }
        Covariance::Cluster => {
            let mut sums: BTreeMap<u32, [f64; K]> = BTreeMap::new();
            for i in 0..n {
                let xi = row(i);
                let e = resid(i, &xi);
                let s = sums.entry(design.cluster[i]).or_insert([0.0; K]);
                for p in 0..K {
                    s[p] += xi[p] * e;
                }
            }
            let g = sums.len();
            for s in sums.values() {
                for p in 0..K {
                    for q in 0..K {
                        meat[p][q] += s[p] * s[q];
                    }
                }
            }
            let factor = if g > 1 && n > K {
                (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - K) as f64)
            } else {
                1.0
            };
            for r in meat.iter_mut() {
                for v in r.iter_mut() {
                    *v *= factor;
                }
            }
            df = (g.max(2) - 1) as f64;
        }
    }
    let mut cov = [[0.0; K]; K];
    for p in 0..K {
        for q in 0..K {
            let mut acc = 0.0;
            for s in 0..K {
                for t in 0..K {
                    acc += xtx_inv[p][s] * meat[s][t] * xtx_inv[t][q];
                }
            }
            cov[p][q] = acc;
        }
    }
    (cov, df)
}

fn t_dist(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df.max(1.0)).expect("positive degrees of freedom")
}

fn two_sided(estimate: f64, se: f64, df: f64) -> f64 {
    if !(se > 0.0) {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let t = (estimate / se).abs();
    (2.0 * t_dist(df).sf(t)).clamp(0.0, 1.0)
}

fn upper_tail(estimate: f64, se: f64, df: f64) -> f64 {
    if !(se > 0.0) {
        return if estimate > 0.0 { 0.0 } else { 1.0 };
    }
    t_dist(df).sf(estimate / se).clamp(0.0, 1.0)
}

/// p-value with up to three significant digits, in exponent form below
/// 0.001 (`5.3e-8`).
pub fn format_p_value(p: f64) -> String {
    if p == 0.0 {
        return "0".into();
    }
    if p >= 1e-3 {
        return trim_zeros(&format!("{p:.4}"));
    }
    let s = format!("{p:.2e}");
    let (mantissa, exponent) = s.split_once('e').expect("exponent form");
    format!("{}e{}", trim_zeros(mantissa), exponent)
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let cov = match self.covariance {
            Covariance::Hc3 => "HC3",
            Covariance::Cluster => "cluster-robust",
        };
        let _ = writeln!(out, "{:<22}{:>12}{:>12}{:>12}", "term", "estimate", "std.error", "p-value");
        let _ = writeln!(
            out,
            "{:<22}{:>12.2}{:>12.4}{:>12}",
            "mean.forest.prediction",
            self.alpha,
            self.se_alpha,
            format_p_value(self.p_alpha)
        );
        match (self.beta, self.se_beta, self.p_beta) {
            (Some(b), Some(se), Some(p)) => {
                let _ = writeln!(
                    out,
                    "{:<22}{:>12.2}{:>12.4}{:>12}",
                    "differential.forest",
                    b,
                    se,
                    format_p_value(p)
                );
            }
            _ => {
                let _ = writeln!(out, "{:<22}{:>12}{:>12}{:>12}", "differential.forest", "undefined", "-", "-");
            }
        }
        let _ = writeln!(
            out,
            "n used {} (excluded: {} without out-of-bag trees, {} outside propensity bounds); {} standard errors{}",
            self.n_used,
            self.n_excluded_oob,
            self.n_excluded_propensity,
            cov,
            if self.degenerate { "; heterogeneity regressor degenerate" } else { "" }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_rendering() {
        assert_eq!(format_p_value(5.3e-8), "5.3e-8");
        assert_eq!(format_p_value(2.23e-7), "2.23e-7");
        assert_eq!(format_p_value(0.0412), "0.0412");
        assert_eq!(format_p_value(1.0), "1");
    }

    #[test]
    fn tails() {
        assert!((two_sided(0.0, 1.0, 50.0) - 1.0).abs() < 1e-12);
        assert!((upper_tail(0.0, 1.0, 50.0) - 0.5).abs() < 1e-12);
        // large-df t approaches the normal: P(T > 1.96) ~ 0.025
        assert!((upper_tail(1.96, 1.0, 1e6) - 0.025).abs() < 1e-3);
    }

    #[test]
    fn mean_skips_invalid() {
        let t = |v, c| TauEstimate {
            tau_hat: v,
            variance: 0.0,
            oob_tree_count: c,
        };
        assert_eq!(mean_oob_tau(&[t(-0.1, 3), t(0.1, 2), t(9.0, 0)]).unwrap(), 0.0);
        assert!(mean_oob_tau(&[t(1.0, 0)]).is_err());
    }
}
