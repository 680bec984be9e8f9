//! Honest causal forests with local centering, and the regression forests
//! used for the outcome and treatment nuisance models.

mod causal;
mod data;
mod persist;
mod regression;
mod sampling;
mod split;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use causal::{
    fit_causal_forest, grow_causal_tree, predict, predict_oob, variance_estimates,
    CausalForestModel, CausalTreeInput, FeatureProfile, GroupPredictions, TauEstimate,
};
pub use data::{Membership, RankedFeatures};
pub use persist::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use regression::{fit_regression_forest, RegressionForest, Target};
pub use sampling::ClusterUnits;
pub use split::{leaf_estimate, split_score};

use crate::error::{Error, Result};

/// Which units the outcome nuisance model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeModel {
    /// Marginal `E[Y | X]` on all units.
    #[default]
    All,
    /// `E[Y | X, W = 0]` on control units only.
    Controls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    pub honesty_fraction: f64,
    /// Features tried per split; `None` means `min(ceil(sqrt(p)) + 20, p)`.
    pub mtry: Option<usize>,
    pub min_leaf_treated: usize,
    pub min_leaf_control: usize,
    /// Trees sharing one half-sample, for variance estimation.
    pub group_size: usize,
    pub seed: u64,
    pub cluster_aware: bool,
    pub cluster_units: ClusterUnits,
    /// Grow trees on outcome and treatment residuals.
    pub center: bool,
    /// Trees per nuisance forest; `None` means `max(50, n_trees / 4)`.
    pub nuisance_trees: Option<usize>,
    pub nuisance_min_leaf: usize,
    pub outcome_model: OutcomeModel,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 2000,
            subsample_fraction: 0.5,
            honesty_fraction: 0.5,
            mtry: None,
            min_leaf_treated: 5,
            min_leaf_control: 5,
            group_size: 2,
            seed: 42,
            cluster_aware: true,
            cluster_units: ClusterUnits::All,
            center: true,
            nuisance_trees: None,
            nuisance_min_leaf: 5,
            outcome_model: OutcomeModel::All,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::argument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        frac("subsample_fraction", self.subsample_fraction)?;
        frac("honesty_fraction", self.honesty_fraction)?;
        if self.min_leaf_treated < 1 || self.min_leaf_control < 1 || self.nuisance_min_leaf < 1 {
            return Err(Error::argument("minimum leaf counts must be at least 1"));
        }
        if self.group_size < 1 {
            return Err(Error::argument("group_size must be at least 1"));
        }
        if self.n_trees < 2 * self.group_size {
            return Err(Error::argument(format!(
                "n_trees ({}) must be at least 2 * group_size ({})",
                self.n_trees, self.group_size
            )));
        }
        if self.n_trees % self.group_size != 0 {
            return Err(Error::argument("n_trees must be a multiple of group_size"));
        }
        if self.group_size > 1 && self.subsample_fraction > 0.5 {
            return Err(Error::argument(
                "subsample_fraction above 0.5 leaves no room for grouped half-samples",
            ));
        }
        if self.mtry == Some(0) {
            return Err(Error::argument("mtry must be positive"));
        }
        Ok(())
    }

    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((p as f64).sqrt().ceil() as usize + 20).min(p))
            .clamp(1, p.max(1))
    }

    pub fn n_groups(&self) -> usize {
        self.n_trees / self.group_size
    }

    pub fn nuisance_tree_count(&self) -> usize {
        self.nuisance_trees.unwrap_or((self.n_trees / 4).max(50))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ForestConfig::default().validate().unwrap();
        assert_eq!(ForestConfig::default().mtry_for(38), 27);
        assert_eq!(ForestConfig::default().mtry_for(12), 12);
        assert_eq!(ForestConfig::default().nuisance_tree_count(), 500);
    }

    #[test]
    fn invariants_enforced() {
        let bad = [
            ForestConfig { subsample_fraction: 1.0, ..Default::default() },
            ForestConfig { honesty_fraction: 0.0, ..Default::default() },
            ForestConfig { min_leaf_control: 0, ..Default::default() },
            ForestConfig { n_trees: 3, group_size: 2, ..Default::default() },
            ForestConfig { n_trees: 5, group_size: 2, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
