//! Targeting rules and their estimated impact.
//!
//! Effects are on the absolute-risk scale with negative values meaning
//! benefit, so "readmissions prevented" is minus the summed effect.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Period, N_VENTILES};
use crate::error::{Error, Result};
use crate::forest::CausalForestModel;

/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

/// Per-unit value of preventing a readmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payoffs {
    /// Same value for every unit.
    Constant(f64),
    /// The cohort's PAYOFF column.
    Column,
}

impl Default for Payoffs {
    fn default() -> Self {
        Payoffs::Constant(1.0)
    }
}

fn default_threshold() -> f64 {
    crate::cohort::ASSIGNMENT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Treat every unit with `risk >= threshold`, optionally only within
    /// one period.
    RiskThreshold {
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        period: Option<Period>,
    },
    /// Treat the `floor(k * n_v)` most negative estimated effects of each
    /// ventile.
    CateTopkPerVentile { k: f64 },
    /// As `CateTopkPerVentile`, ranking by effect times payoff.
    UtilityTopkPerVentile {
        k: f64,
        #[serde(default)]
        payoffs: Payoffs,
    },
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::RiskThreshold { threshold, .. } => {
                if !(0.0..=1.0).contains(threshold) {
                    return Err(Error::argument(format!("threshold must lie in [0, 1], got {threshold}")));
                }
            }
            PolicySpec::CateTopkPerVentile { k } => check_k(*k)?,
            PolicySpec::UtilityTopkPerVentile { k, payoffs } => {
                check_k(*k)?;
                if let Payoffs::Constant(p) = payoffs {
                    if !(*p >= 0.0 && p.is_finite()) {
                        return Err(Error::argument(format!("payoff must be nonnegative, got {p}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Row label in policy tables.
    pub fn label(&self) -> String {
        let pct = |k: f64| {
            let v = k * 100.0;
            if (v - v.round()).abs() < 1e-9 {
                format!("{}%", v.round())
            } else {
                format!("{v}%")
            }
        };
        match self {
            PolicySpec::RiskThreshold { threshold, period } => {
                let base = format!("Target risk >= {}", pct(*threshold));
                match period {
                    Some(p) => format!("{base} ({p} period)"),
                    None => base,
                }
            }
            PolicySpec::CateTopkPerVentile { k } => format!("CATE top {} per ventile", pct(*k)),
            PolicySpec::UtilityTopkPerVentile { k, .. } => format!("Utility top {} per ventile", pct(*k)),
        }
    }

    /// Unit ids treated under this rule, ascending.
    pub fn select(&self, cohort: &Cohort, taus: &[f64]) -> Result<Vec<u64>> {
        self.validate()?;
        match self {
            PolicySpec::RiskThreshold { threshold, period } => {
                risk_threshold_policy(cohort, *threshold, *period)
            }
            PolicySpec::CateTopkPerVentile { k } => cate_topk_policy(cohort, taus, *k),
            PolicySpec::UtilityTopkPerVentile { k, payoffs } => {
                let values = match payoffs {
                    Payoffs::Constant(p) => vec![*p; cohort.len()],
                    Payoffs::Column => cohort.units().iter().map(|u| u.payoff).collect(),
                };
                utility_topk_policy(cohort, taus, &values, *k)
            }
        }
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("k must lie in (0, 1], got {k}")))
    }
}

/// Units with `risk >= threshold` (inclusive), restricted to `period` when
/// given.
pub fn risk_threshold_policy(cohort: &Cohort, threshold: f64, period: Option<Period>) -> Result<Vec<u64>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::argument(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let mut ids: Vec<u64> = cohort
        .units()
        .iter()
        .filter(|u| u.risk >= threshold && period.is_none_or(|p| u.period == p))
        .map(|u| u.unit_id)
        .collect();
    ids.sort_unstable();
    Ok(ids)
}

fn check_cover(cohort: &Cohort, values: &[f64], what: &str) -> Result<()> {
    if values.len() != cohort.len() {
        return Err(Error::argument(format!(
            "{what} cover {} of {} units",
            values.len(),
            cohort.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::argument(format!(
            "{what} missing for unit {}",
            cohort.units()[i].unit_id
        )));
    }
    Ok(())
}

/// Top `floor(k * n_v)` units of each ventile by ascending `score`, ties to
/// the smaller unit id.
fn topk_per_ventile(cohort: &Cohort, score: &[f64], k: f64) -> Vec<u64> {
    let mut by_ventile: Vec<Vec<usize>> = vec![Vec::new(); N_VENTILES + 1];
    for (i, &v) in cohort.ventiles().iter().enumerate() {
        by_ventile[v as usize].push(i);
    }
    let units = cohort.units();
    let mut ids = Vec::new();
    for mut rows in by_ventile {
        let take = (k * rows.len() as f64 + 1e-9).floor() as usize;
        if take == 0 {
            continue;
        }
        rows.sort_by(|&a, &b| {
            score[a]
                .total_cmp(&score[b])
                .then(units[a].unit_id.cmp(&units[b].unit_id))
        });
        ids.extend(rows[..take.min(rows.len())].iter().map(|&r| units[r].unit_id));
    }
    ids.sort_unstable();
    ids
}

/// The `floor(k * n_v)` most negative estimated effects of each ventile.
pub fn cate_topk_policy(cohort: &Cohort, taus: &[f64], k: f64) -> Result<Vec<u64>> {
    check_k(k)?;
    check_cover(cohort, taus, "effect estimates")?;
    Ok(topk_per_ventile(cohort, taus, k))
}

fn check_payoffs(payoffs: &[f64]) -> Result<()> {
    if let Some(p) = payoffs.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::argument(format!("payoff must be nonnegative, got {p}")));
    }
    Ok(())
}

/// Positions ordered by ascending expected utility `tau * payoff` (most
/// preferred first), ties to the earlier position.
pub fn utility_ranking(taus: &[f64], payoffs: &[f64]) -> Result<Vec<usize>> {
    if taus.len() != payoffs.len() {
        return Err(Error::argument("effects and payoffs differ in length"));
    }
    check_payoffs(payoffs)?;
    let utility: Vec<f64> = taus.iter().zip(payoffs).map(|(t, p)| t * p).collect();
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| utility[a].total_cmp(&utility[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Per-ventile top-k by expected utility.
pub fn utility_topk_policy(cohort: &Cohort, taus: &[f64], payoffs: &[f64], k: f64) -> Result<Vec<u64>> {
    check_k(k)?;
    check_cover(cohort, taus, "effect estimates")?;
    check_cover(cohort, payoffs, "payoffs")?;
    check_payoffs(payoffs)?;
    let utility: Vec<f64> = taus.iter().zip(payoffs).map(|(t, p)| t * p).collect();
    Ok(topk_per_ventile(cohort, &utility, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyImpact {
    pub strategy: String,
    pub treated_ids: Vec<u64>,
    pub n_treated: usize,
    /// `max(0, -sum of treated effects)`.
    pub prevented: f64,
    /// `-sum of treated effects`, kept when the policy causes net harm.
    pub raw_prevented: f64,
    pub net_harm: bool,
    pub ci95: Option<(f64, f64)>,
    pub nnt: Option<u64>,
}

/// Point impact of treating `treated` given per-unit effects `taus` in
/// cohort order.
pub fn impact(cohort: &Cohort, treated: &[u64], taus: &[f64]) -> Result<PolicyImpact> {
    check_cover(cohort, taus, "effect estimates")?;
    let rows = cohort.positions_of(treated)?;
    let raw = -rows.iter().map(|&r| taus[r]).sum::<f64>();
    let net_harm = raw < 0.0;
    if net_harm {
        log::warn!("policy causes net harm: estimated effect sum {:.3}", -raw);
    }
    let prevented = raw.max(0.0);
    Ok(PolicyImpact {
        strategy: String::new(),
        treated_ids: treated.to_vec(),
        n_treated: treated.len(),
        prevented,
        raw_prevented: raw,
        net_harm,
        ci95: None,
        nnt: nnt(prevented, treated.len() as u64).ok(),
    })
}

/// Interventions per readmission prevented, rounded up.
pub fn nnt(prevented: f64, n_treated: u64) -> Result<u64> {
    if !(prevented > 0.0) {
        return Err(Error::Estimation(format!(
            "number needed to treat is undefined when {prevented} readmissions are prevented"
        )));
    }
    Ok((n_treated as f64 / prevented).ceil() as u64)
}

/// 95% normal interval for readmissions prevented by `treated`, from the
/// grouped half-sample variance of per-tree totals. Bounds are clipped at 0.
pub fn impact_ci(model: &CausalForestModel, cohort: &Cohort, treated: &[u64]) -> Result<(f64, f64)> {
    let rows = cohort.positions_of(treated)?;
    let totals = model.tree_totals(cohort, &rows)?;
    let variance = totals.variance()?;
    let point = -totals.mean().unwrap_or(0.0);
    let half = Z95 * variance.sqrt();
    Ok(((point - half).max(0.0), (point + half).max(0.0)))
}

/// Select, score and (when a model is given) attach an interval.
pub fn evaluate(
    spec: &PolicySpec,
    cohort: &Cohort,
    taus: &[f64],
    model: Option<&CausalForestModel>,
) -> Result<PolicyImpact> {
    let treated = spec.select(cohort, taus)?;
    let mut out = impact(cohort, &treated, taus)?;
    out.strategy = spec.label();
    if let Some(m) = model {
        let (lo, hi) = impact_ci(m, cohort, &treated)?;
        out.ci95 = Some((lo.min(out.prevented), hi.max(out.prevented)));
    }
    Ok(out)
}

/// Integer with thousands separators: `39985` becomes `39,985`.
pub fn format_count(value: f64) -> String {
    let rounded = value.round();
    let neg = rounded < 0.0;
    let digits = format!("{}", rounded.abs() as u64);
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    if neg {
        format!("-{out}")
    } else {
        out
    }
}

impl PolicyImpact {
    /// `2,478 (2,262-2,694)`, or the bare count without an interval.
    pub fn prevented_text(&self) -> String {
        match self.ci95 {
            Some((lo, hi)) => format!(
                "{} ({}-{})",
                format_count(self.prevented),
                format_count(lo),
                format_count(hi)
            ),
            None => format_count(self.prevented),
        }
    }

    pub fn nnt_text(&self) -> String {
        self.nnt.map_or_else(|| "undefined".into(), |v| v.to_string())
    }
}

impl fmt::Display for PolicyImpact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} prevented, {} interventions, NNT {}",
            self.strategy,
            self.prevented_text(),
            format_count(self.n_treated as f64),
            self.nnt_text()
        )
    }
}
