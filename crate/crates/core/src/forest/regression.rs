//! Honest regression forests for the nuisance functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

use super::data::{Membership, RankedFeatures};
use super::sampling::{honest_split, SamplingFrame};
use super::split::RegressionCriterion;
use super::tree::{grow, GrowParams, Tree};
use super::{ForestConfig, OutcomeModel};

/// Column a regression forest is trained to predict.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `Y`; trained on all units or only controls per the forest config.
    Outcome,
    /// `W`.
    Treatment,
    /// Arbitrary per-unit values, in cohort order.
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    trees: Vec<Tree>,
    members: Vec<Membership>,
    oob: Vec<f64>,
    oob_counts: Vec<u32>,
}

/// Mean that is exact for constant inputs.
pub(crate) fn stable_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut reference = None;
    let (mut acc, mut n) = (0.0, 0usize);
    for v in values {
        let r = *reference.get_or_insert(v);
        acc += v - r;
        n += 1;
    }
    reference.map(|r| r + acc / n as f64)
}

impl RegressionForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Out-of-bag prediction per training unit. Units inside every tree's
    /// subsample (or outside the training rows) fall back to the full
    /// ensemble average.
    pub fn predict_oob(&self) -> &[f64] {
        &self.oob
    }

    /// Number of trees whose subsample excluded each training unit.
    pub fn oob_counts(&self) -> &[u32] {
        &self.oob_counts
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        stable_mean(self.trees.iter().map(|t| t.predict(x))).unwrap_or(0.0)
    }

    pub fn predict(&self, cohort: &Cohort) -> Vec<f64> {
        cohort.units().par_iter().map(|u| self.predict_row(&u.x)).collect()
    }
}

pub(crate) struct RegressionFit<'a> {
    pub data: &'a RankedFeatures,
    pub rows_x: &'a [&'a [f64]],
    pub cluster_of: &'a [u32],
    pub y: &'a [f64],
    pub train_rows: Vec<u32>,
    pub n_trees: usize,
    pub min_leaf: usize,
    pub domain: Domain,
}

pub(crate) fn fit_rows(fit: RegressionFit<'_>, config: &ForestConfig) -> Result<RegressionForest> {
    let n = fit.data.n_rows();
    if fit.train_rows.len() < 2 * fit.min_leaf {
        return Err(Error::Fit(format!(
            "regression forest needs at least {} training units, got {}",
            2 * fit.min_leaf,
            fit.train_rows.len()
        )));
    }
    let frame = SamplingFrame::new(
        fit.train_rows.clone(),
        fit.cluster_of,
        config.cluster_aware,
        config.cluster_units,
    );
    let criterion = RegressionCriterion {
        y: fit.y,
        min_leaf: fit.min_leaf as u32,
    };
    let params = GrowParams {
        mtry: config.mtry_for(fit.data.n_features()),
    };
    let grown: Vec<(Tree, Membership)> = (0..fit.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(config.seed, fit.domain, t as u64);
            let everything = frame.draw_group(1, &mut rng);
            let rows = frame.draw_tree(&everything, config.subsample_fraction, &mut rng);
            let membership = Membership::from_rows(n, &rows);
            let (mut s, mut e) = honest_split(rows, config.honesty_fraction, &mut rng);
            let tree = grow(fit.data, &criterion, &mut s, &mut e, &params, &mut rng);
            (tree, membership)
        })
        .collect();
    let (trees, members): (Vec<Tree>, Vec<Membership>) = grown.into_iter().unzip();

    let (oob, oob_counts): (Vec<f64>, Vec<u32>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = fit.rows_x[i];
            let mut count = 0u32;
            let mean = stable_mean(
                trees
                    .iter()
                    .zip(&members)
                    .filter(|(_, m)| !m.contains(i))
                    .map(|(t, _)| {
                        count += 1;
                        t.predict(x)
                    }),
            );
            let value = mean.unwrap_or_else(|| {
                stable_mean(trees.iter().map(|t| t.predict(x))).unwrap_or(0.0)
            });
            (value, count)
        })
        .unzip();

    Ok(RegressionForest {
        trees,
        members,
        oob,
        oob_counts,
    })
}

/// Regression forest for `target` on `cohort`, with
/// `config.nuisance_tree_count()` trees of minimum leaf size
/// `config.nuisance_min_leaf`.
pub fn fit_regression_forest(cohort: &Cohort, target: Target, config: &ForestConfig) -> Result<RegressionForest> {
    config.validate()?;
    let n = cohort.len();
    let units = cohort.units();
    let (y, train_rows, domain) = match target {
        Target::Outcome => {
            let rows = match config.outcome_model {
                OutcomeModel::All => (0..n as u32).collect(),
                OutcomeModel::Controls => (0..n as u32).filter(|&i| !units[i as usize].w).collect(),
            };
            (cohort.outcome(), rows, Domain::NuisanceOutcome)
        }
        Target::Treatment => (cohort.treatment(), (0..n as u32).collect(), Domain::NuisanceTreatment),
        Target::Values(v) => {
            if v.len() != n {
                return Err(Error::argument(format!(
                    "target has {} values for {n} units",
                    v.len()
                )));
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::value(i + 1, "target value is not finite"));
            }
            (v, (0..n as u32).collect(), Domain::NuisanceOutcome)
        }
    };
    let rows_x: Vec<&[f64]> = units.iter().map(|u| u.x.as_slice()).collect();
    let data = RankedFeatures::from_rows(&rows_x);
    let cluster_of: Vec<u32> = units.iter().map(|u| u.cluster_id).collect();
    fit_rows(
        RegressionFit {
            data: &data,
            rows_x: &rows_x,
            cluster_of: &cluster_of,
            y: &y,
            train_rows,
            n_trees: config.nuisance_tree_count(),
            min_leaf: config.nuisance_min_leaf,
            domain,
        },
        config,
    )
}
