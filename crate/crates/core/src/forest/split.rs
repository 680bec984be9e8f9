//! Split criteria and leaf estimators.

use std::ops::{AddAssign, Sub};

use crate::error::{Error, Result};

use super::tree::{BinStats, Criterion, NodeEstimate};

/// Difference in mean outcome between treated and control units of a leaf.
pub fn leaf_estimate(treated_outcomes: &[f64], control_outcomes: &[f64]) -> Result<f64> {
    if treated_outcomes.is_empty() || control_outcomes.is_empty() {
        return Err(Error::Estimation(
            "leaf has an empty treatment arm; back off to the parent node".into(),
        ));
    }
    let mt = treated_outcomes.iter().sum::<f64>() / treated_outcomes.len() as f64;
    let mc = control_outcomes.iter().sum::<f64>() / control_outcomes.len() as f64;
    Ok(mt - mc)
}

/// Within-node effect: slope of `y` on `w` with an intercept. For a binary
/// `w` this is exactly the treated-minus-control difference in means; for
/// residualized `w` it is the residual-on-residual estimate.
fn node_effect(n: f64, sw: f64, sy: f64, swy: f64, sww: f64) -> Option<f64> {
    if n < 2.0 {
        return None;
    }
    let sxx = sww - sw * sw / n;
    let sxy = swy - sw * sy / n;
    if !(sxx > 1e-12 * n) {
        return None;
    }
    Some(sxy / sxx)
}

/// Heterogeneity score `n_L * tau_L^2 + n_R * tau_R^2` of a candidate split,
/// where each child effect is the slope of `y` on `w` within the child.
/// Returns `None` when a child cannot identify an effect.
pub fn split_score(y: &[f64], w: &[f64], goes_left: &[bool]) -> Option<f64> {
    let mut sides = [[0.0f64; 5]; 2];
    for ((&yi, &wi), &left) in y.iter().zip(w).zip(goes_left) {
        let s = &mut sides[usize::from(!left)];
        s[0] += 1.0;
        s[1] += wi;
        s[2] += yi;
        s[3] += wi * yi;
        s[4] += wi * wi;
    }
    let mut score = 0.0;
    for s in &sides {
        let tau = node_effect(s[0], s[1], s[2], s[3], s[4])?;
        score += s[0] * tau * tau;
    }
    Some(score)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct CausalStats {
    n: u32,
    treated: u32,
    sw: f64,
    sy: f64,
    swy: f64,
    sww: f64,
    est_treated: u32,
    est_control: u32,
}

impl AddAssign for CausalStats {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        self.treated += o.treated;
        self.sw += o.sw;
        self.sy += o.sy;
        self.swy += o.swy;
        self.sww += o.sww;
        self.est_treated += o.est_treated;
        self.est_control += o.est_control;
    }
}

impl Sub for CausalStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        CausalStats {
            n: self.n - o.n,
            treated: self.treated - o.treated,
            sw: self.sw - o.sw,
            sy: self.sy - o.sy,
            swy: self.swy - o.swy,
            sww: self.sww - o.sww,
            est_treated: self.est_treated - o.est_treated,
            est_control: self.est_control - o.est_control,
        }
    }
}

impl BinStats for CausalStats {
    fn has_structure(&self) -> bool {
        self.n > 0
    }
    fn is_empty(&self) -> bool {
        self.n == 0 && self.est_treated == 0 && self.est_control == 0
    }
}

impl CausalStats {
    fn effect(&self) -> Option<f64> {
        node_effect(self.n as f64, self.sw, self.sy, self.swy, self.sww)
    }
}

/// Causal split criterion on (optionally centered) structure outcomes and
/// treatments. `treated` carries the raw arm used for leaf minimums.
pub(crate) struct CausalCriterion<'a> {
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub raw_y: &'a [f64],
    pub treated: &'a [bool],
    pub min_treated: u32,
    pub min_control: u32,
    /// Leaf effect by residual-on-residual slope instead of the plain
    /// difference in means.
    pub centered: bool,
}

impl CausalCriterion<'_> {
    fn feasible(&self, s: &CausalStats) -> bool {
        s.treated >= self.min_treated
            && s.n - s.treated >= self.min_control
            && s.est_treated >= self.min_treated
            && s.est_control >= self.min_control
    }
}

impl Criterion for CausalCriterion<'_> {
    type Stats = CausalStats;

    fn structure_unit(&self, row: u32) -> CausalStats {
        let r = row as usize;
        let (w, y) = (self.w[r], self.y[r]);
        CausalStats {
            n: 1,
            treated: u32::from(self.treated[r]),
            sw: w,
            sy: y,
            swy: w * y,
            sww: w * w,
            est_treated: 0,
            est_control: 0,
        }
    }

    fn estimation_unit(&self, row: u32) -> CausalStats {
        let t = self.treated[row as usize];
        CausalStats {
            est_treated: u32::from(t),
            est_control: u32::from(!t),
            ..Default::default()
        }
    }

    fn score(&self, left: &CausalStats, right: &CausalStats) -> Option<f64> {
        if !self.feasible(left) || !self.feasible(right) {
            return None;
        }
        let tl = left.effect()?;
        let tr = right.effect()?;
        Some(left.n as f64 * tl * tl + right.n as f64 * tr * tr)
    }

    fn baseline(&self, parent: &CausalStats) -> Option<f64> {
        let t = parent.effect()?;
        Some(parent.n as f64 * t * t)
    }

    fn estimate(&self, rows: &[u32]) -> NodeEstimate {
        let mut n_treated = 0u32;
        let mut n_control = 0u32;
        let (mut st, mut sc) = (0.0, 0.0);
        let mut acc = [0.0f64; 4];
        for &row in rows {
            let r = row as usize;
            if self.treated[r] {
                n_treated += 1;
                st += self.raw_y[r];
            } else {
                n_control += 1;
                sc += self.raw_y[r];
            }
            let (w, y) = (self.w[r], self.y[r]);
            acc[0] += w;
            acc[1] += y;
            acc[2] += w * y;
            acc[3] += w * w;
        }
        let value = if n_treated == 0 || n_control == 0 {
            None
        } else if self.centered {
            node_effect(rows.len() as f64, acc[0], acc[1], acc[2], acc[3])
        } else {
            Some(st / n_treated as f64 - sc / n_control as f64)
        };
        NodeEstimate {
            value: value.map(|v| v.clamp(-1.0, 1.0)),
            n_treated,
            n_control,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct RegressionStats {
    n: u32,
    est: u32,
    sy: f64,
}

impl AddAssign for RegressionStats {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        self.est += o.est;
        self.sy += o.sy;
    }
}

impl Sub for RegressionStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        RegressionStats {
            n: self.n - o.n,
            est: self.est - o.est,
            sy: self.sy - o.sy,
        }
    }
}

impl BinStats for RegressionStats {
    fn has_structure(&self) -> bool {
        self.n > 0
    }
    fn is_empty(&self) -> bool {
        self.n == 0 && self.est == 0
    }
}

/// Squared-error criterion: maximizing `S_L^2/n_L + S_R^2/n_R` minimizes
/// the children's summed squared error.
pub(crate) struct RegressionCriterion<'a> {
    pub y: &'a [f64],
    pub min_leaf: u32,
}

impl Criterion for RegressionCriterion<'_> {
    type Stats = RegressionStats;

    fn structure_unit(&self, row: u32) -> RegressionStats {
        RegressionStats {
            n: 1,
            est: 0,
            sy: self.y[row as usize],
        }
    }

    fn estimation_unit(&self, _row: u32) -> RegressionStats {
        RegressionStats {
            n: 0,
            est: 1,
            sy: 0.0,
        }
    }

    fn score(&self, l: &RegressionStats, r: &RegressionStats) -> Option<f64> {
        if l.n < self.min_leaf || r.n < self.min_leaf || l.est == 0 || r.est == 0 {
            return None;
        }
        Some(l.sy * l.sy / l.n as f64 + r.sy * r.sy / r.n as f64)
    }

    fn baseline(&self, parent: &RegressionStats) -> Option<f64> {
        if parent.n < 2 * self.min_leaf {
            return None;
        }
        // Strict improvement over the unsplit node with a relative tolerance
        // so constant targets never split on rounding noise.
        let base = parent.sy * parent.sy / parent.n as f64;
        Some(base + 1e-12 * base.abs().max(1.0))
    }

    fn estimate(&self, rows: &[u32]) -> NodeEstimate {
        let n = rows.len() as u32;
        let value = super::regression::stable_mean(rows.iter().map(|&r| self.y[r as usize]));
        NodeEstimate {
            value,
            n_treated: n,
            n_control: 0,
        }
    }
}
