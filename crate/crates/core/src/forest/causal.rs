//! Honest causal forest with grouped half-samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{Cohort, FeatureKind, Schema};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::stats::{quantile_sorted, sorted};

use super::data::{Membership, RankedFeatures};
use super::regression::{fit_rows, stable_mean, RegressionFit, RegressionForest};
use super::sampling::{honest_split, SamplingFrame};
use super::split::CausalCriterion;
use super::tree::{grow, GrowParams, Tree};
use super::{ForestConfig, OutcomeModel};

/// Per-unit effect estimate on the absolute-risk scale (negative = benefit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub tau_hat: f64,
    pub variance: f64,
    /// Trees averaged into `tau_hat`. For out-of-bag estimates, zero marks
    /// a unit that every tree saw; such estimates must not be used.
    pub oob_tree_count: u32,
}

impl TauEstimate {
    pub fn is_valid(&self) -> bool {
        self.oob_tree_count > 0
    }
}

/// Reference covariate vector of the training cohort: numeric columns at
/// their median, categoricals at their modal level. Numeric columns also
/// keep their 0..=100 percentiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub values: Vec<f64>,
    pub percentiles: Vec<Option<Vec<f64>>>,
}

impl FeatureProfile {
    pub fn of(cohort: &Cohort) -> Self {
        let schema = cohort.schema();
        let width = schema.n_columns();
        let mut values = vec![0.0; width];
        let mut percentiles = vec![None; width];
        let mut offset = 0;
        for f in schema.features() {
            match &f.kind {
                FeatureKind::Numeric => {
                    let col = sorted(&cohort.column(offset));
                    values[offset] = quantile_sorted(&col, 0.5).unwrap_or(0.0);
                    percentiles[offset] = Some(
                        (0..=100)
                            .map(|q| quantile_sorted(&col, q as f64 / 100.0).unwrap_or(0.0))
                            .collect(),
                    );
                }
                FeatureKind::Categorical { levels } => {
                    let counts: Vec<usize> = (0..levels.len())
                        .map(|k| cohort.units().iter().filter(|u| u.x[offset + k] == 1.0).count())
                        .collect();
                    // first level wins ties
                    let mode = (0..levels.len())
                        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                        .unwrap_or(0);
                    values[offset + mode] = 1.0;
                }
            }
            offset += f.width();
        }
        FeatureProfile { values, percentiles }
    }

    /// Percentile `q` in `[0, 100]` of a numeric design column.
    pub fn percentile(&self, column: usize, q: f64) -> Option<f64> {
        let p = self.percentiles.get(column)?.as_ref()?;
        quantile_sorted(p, q / 100.0)
    }
}

/// Per-tree values of some statistic, laid out group by group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPredictions {
    pub group_size: usize,
    pub values: Vec<f64>,
}

impl GroupPredictions {
    pub fn n_groups(&self) -> usize {
        self.values.len() / self.group_size.max(1)
    }

    pub fn mean(&self) -> Option<f64> {
        stable_mean(self.values.iter().copied())
    }

    /// `max(0, between-group variance of group means - mean within-group
    /// variance / group_size)`. Needs at least two groups.
    pub fn variance(&self) -> Result<f64> {
        let l = self.group_size;
        let g = self.n_groups();
        if g < 2 || l == 0 {
            return Err(Error::Estimation(format!(
                "variance needs at least 2 tree groups, got {g}"
            )));
        }
        let means: Vec<f64> = self
            .values
            .chunks_exact(l)
            .map(|c| c.iter().sum::<f64>() / l as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / g as f64;
        let between = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (g - 1) as f64;
        let within = if l > 1 {
            self.values
                .chunks_exact(l)
                .zip(&means)
                .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (l - 1) as f64)
                .sum::<f64>()
                / g as f64
        } else {
            0.0
        };
        Ok((between - within / l as f64).max(0.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalForestModel {
    config: ForestConfig,
    schema: Schema,
    schema_digest: String,
    training_digest: String,
    n_train: usize,
    trees: Vec<Tree>,
    members: Vec<Membership>,
    outcome_forest: RegressionForest,
    treatment_forest: RegressionForest,
    oob_m: Vec<f64>,
    oob_e: Vec<f64>,
    profile: FeatureProfile,
}

/// Inputs for growing one honest causal tree outside a forest fit.
pub struct CausalTreeInput<'a> {
    pub features: &'a RankedFeatures,
    /// Split-search outcome (residualized when centering).
    pub outcome: &'a [f64],
    /// Split-search treatment (residualized when centering).
    pub treatment: &'a [f64],
    pub raw_outcome: &'a [f64],
    pub treated: &'a [bool],
}

/// Grow one honest causal tree on the given structure and estimation rows.
pub fn grow_causal_tree(
    input: &CausalTreeInput<'_>,
    structure: &[u32],
    estimation: &[u32],
    config: &ForestConfig,
    seed: u64,
) -> Tree {
    let criterion = CausalCriterion {
        y: input.outcome,
        w: input.treatment,
        raw_y: input.raw_outcome,
        treated: input.treated,
        min_treated: config.min_leaf_treated as u32,
        min_control: config.min_leaf_control as u32,
        centered: config.center,
    };
    let params = GrowParams {
        mtry: config.mtry_for(input.features.n_features()),
    };
    let mut rng = stream(seed, Domain::TreeSample, 0);
    let mut s = structure.to_vec();
    let mut e = estimation.to_vec();
    grow(input.features, &criterion, &mut s, &mut e, &params, &mut rng)
}

fn training_digest(cohort: &Cohort) -> String {
    let mut h = Sha256::new();
    h.update(cohort.schema().digest().as_bytes());
    for u in cohort.units() {
        h.update(u.unit_id.to_le_bytes());
        for v in &u.x {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([u8::from(u.w), u8::from(u.y)]);
        h.update(u.cluster_id.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Fit an honest causal forest. Nuisance forests for the outcome and the
/// treatment are always fit; their out-of-bag predictions feed local
/// centering (when enabled) and the calibration test.
pub fn fit_causal_forest(cohort: &Cohort, config: &ForestConfig) -> Result<CausalForestModel> {
    config.validate()?;
    let n = cohort.len();
    let need = 4 * (config.min_leaf_treated + config.min_leaf_control);
    if n < need {
        return Err(Error::Fit(format!(
            "causal forest needs at least {need} units, got {n}"
        )));
    }
    let units = cohort.units();
    let treated: Vec<bool> = units.iter().map(|u| u.w).collect();
    let n_treated = treated.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::Fit(format!(
            "both treatment arms are required ({n_treated} of {n} units treated)"
        )));
    }

    let rows_x: Vec<&[f64]> = units.iter().map(|u| u.x.as_slice()).collect();
    let data = RankedFeatures::from_rows(&rows_x);
    let cluster_of: Vec<u32> = units.iter().map(|u| u.cluster_id).collect();
    let y = cohort.outcome();
    let w = cohort.treatment();

    log::info!("fitting nuisance forests ({} trees each)", config.nuisance_tree_count());
    let outcome_rows: Vec<u32> = match config.outcome_model {
        OutcomeModel::All => (0..n as u32).collect(),
        OutcomeModel::Controls => (0..n as u32).filter(|&i| !treated[i as usize]).collect(),
    };
    let nuisance = |target: &[f64], rows: Vec<u32>, domain| {
        fit_rows(
            RegressionFit {
                data: &data,
                rows_x: &rows_x,
                cluster_of: &cluster_of,
                y: target,
                train_rows: rows,
                n_trees: config.nuisance_tree_count(),
                min_leaf: config.nuisance_min_leaf,
                domain,
            },
            config,
        )
    };
    let outcome_forest = nuisance(&y, outcome_rows, Domain::NuisanceOutcome)?;
    let treatment_forest = nuisance(&w, (0..n as u32).collect(), Domain::NuisanceTreatment)?;
    let oob_m = outcome_forest.predict_oob().to_vec();
    let oob_e = treatment_forest.predict_oob().to_vec();

    let (y_split, w_split) = if config.center {
        (
            y.iter().zip(&oob_m).map(|(a, b)| a - b).collect(),
            w.iter().zip(&oob_e).map(|(a, b)| a - b).collect(),
        )
    } else {
        (y.clone(), w.clone())
    };
    let criterion = CausalCriterion {
        y: &y_split,
        w: &w_split,
        raw_y: &y,
        treated: &treated,
        min_treated: config.min_leaf_treated as u32,
        min_control: config.min_leaf_control as u32,
        centered: config.center,
    };
    let params = GrowParams {
        mtry: config.mtry_for(data.n_features()),
    };
    let frame = SamplingFrame::new(
        (0..n as u32).collect(),
        &cluster_of,
        config.cluster_aware,
        config.cluster_units,
    );
    let l = config.group_size;
    log::info!("growing {} causal trees", config.n_trees);
    let grown: Vec<Vec<(Tree, Membership)>> = (0..config.n_groups())
        .into_par_iter()
        .map(|g| {
            let mut group_rng = stream(config.seed, Domain::GroupSample, g as u64);
            let group = frame.draw_group(l, &mut group_rng);
            (0..l)
                .map(|k| {
                    let mut rng = stream(config.seed, Domain::TreeSample, (g * l + k) as u64);
                    let rows = frame.draw_tree(&group, config.subsample_fraction, &mut rng);
                    let membership = Membership::from_rows(n, &rows);
                    let (mut s, mut e) = honest_split(rows, config.honesty_fraction, &mut rng);
                    let tree = grow(&data, &criterion, &mut s, &mut e, &params, &mut rng);
                    (tree, membership)
                })
                .collect()
        })
        .collect();
    let (trees, members): (Vec<Tree>, Vec<Membership>) = grown.into_iter().flatten().unzip();

    Ok(CausalForestModel {
        config: config.clone(),
        schema: cohort.schema().clone(),
        schema_digest: cohort.schema().digest(),
        training_digest: training_digest(cohort),
        n_train: n,
        trees,
        members,
        outcome_forest,
        treatment_forest,
        oob_m,
        oob_e,
        profile: FeatureProfile::of(cohort),
    })
}

impl CausalForestModel {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_digest(&self) -> &str {
        &self.schema_digest
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Subsample of each tree (structure and estimation halves together).
    pub fn memberships(&self) -> &[Membership] {
        &self.members
    }

    pub fn group_size(&self) -> usize {
        self.config.group_size
    }

    pub fn outcome_forest(&self) -> &RegressionForest {
        &self.outcome_forest
    }

    pub fn treatment_forest(&self) -> &RegressionForest {
        &self.treatment_forest
    }

    /// Out-of-bag outcome predictions of the training units.
    pub fn oob_outcome(&self) -> &[f64] {
        &self.oob_m
    }

    /// Out-of-bag propensity predictions of the training units.
    pub fn oob_propensity(&self) -> &[f64] {
        &self.oob_e
    }

    pub fn profile(&self) -> &FeatureProfile {
        &self.profile
    }

    /// Hex SHA-256 of the serialized model.
    pub fn digest(&self) -> String {
        let bytes = bincode::serialize(self).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Replace every node value; used to build degenerate ensembles.
    pub fn map_leaf_values(&mut self, f: impl Fn(f64) -> f64 + Copy) {
        for t in &mut self.trees {
            t.map_values(f);
        }
    }

    fn check_schema(&self, cohort: &Cohort) -> Result<()> {
        if cohort.schema().digest() != self.schema_digest {
            return Err(Error::argument(
                "cohort schema does not match the schema the model was trained on",
            ));
        }
        Ok(())
    }

    fn check_training(&self, cohort: &Cohort) -> Result<()> {
        self.check_schema(cohort)?;
        if cohort.len() != self.n_train || training_digest(cohort) != self.training_digest {
            return Err(Error::argument(
                "out-of-bag prediction requires the training cohort",
            ));
        }
        Ok(())
    }

    /// Average over all trees of the leaf value reached by `x`.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        stable_mean(self.trees.iter().map(|t| t.predict(x))).unwrap_or(0.0)
    }

    /// Per-tree predictions at `x`, in group order.
    pub fn tree_predictions(&self, x: &[f64]) -> GroupPredictions {
        GroupPredictions {
            group_size: self.config.group_size,
            values: self.trees.iter().map(|t| t.predict(x)).collect(),
        }
    }

    /// Per-tree sums of predictions over `rows` of `cohort`, in group order.
    pub fn tree_totals(&self, cohort: &Cohort, rows: &[usize]) -> Result<GroupPredictions> {
        self.check_schema(cohort)?;
        let units = cohort.units();
        let values = self
            .trees
            .par_iter()
            .map(|t| rows.iter().map(|&r| t.predict(&units[r].x)).sum::<f64>())
            .collect();
        Ok(GroupPredictions {
            group_size: self.config.group_size,
            values,
        })
    }

    fn full_estimate(&self, x: &[f64]) -> TauEstimate {
        let preds = self.tree_predictions(x);
        TauEstimate {
            tau_hat: preds.mean().unwrap_or(0.0),
            variance: preds.variance().unwrap_or(0.0),
            oob_tree_count: self.trees.len() as u32,
        }
    }

    fn oob_estimate(&self, i: usize, x: &[f64]) -> TauEstimate {
        let l = self.config.group_size;
        let mut used = Vec::new();
        let mut excluded_groups = Vec::new();
        for (g, chunk) in self.trees.chunks_exact(l).enumerate() {
            let members = &self.members[g * l..(g + 1) * l];
            let mut all_out = true;
            let mut group = Vec::with_capacity(l);
            for (t, m) in chunk.iter().zip(members) {
                if m.contains(i) {
                    all_out = false;
                } else {
                    let v = t.predict(x);
                    used.push(v);
                    group.push(v);
                }
            }
            if all_out {
                excluded_groups.extend(group);
            }
        }
        let count = used.len() as u32;
        let variance = GroupPredictions {
            group_size: l,
            values: excluded_groups,
        }
        .variance()
        .unwrap_or(0.0);
        TauEstimate {
            tau_hat: stable_mean(used.into_iter()).unwrap_or(0.0),
            variance,
            oob_tree_count: count,
        }
    }

    /// Out-of-bag estimates for the training cohort.
    pub fn predict_oob(&self, cohort: &Cohort) -> Result<Vec<TauEstimate>> {
        self.check_training(cohort)?;
        Ok(cohort
            .units()
            .par_iter()
            .enumerate()
            .map(|(i, u)| self.oob_estimate(i, &u.x))
            .collect())
    }

    /// Full-ensemble estimates for any cohort with the training schema.
    pub fn predict(&self, cohort: &Cohort) -> Result<Vec<TauEstimate>> {
        self.check_schema(cohort)?;
        Ok(cohort
            .units()
            .par_iter()
            .map(|u| self.full_estimate(&u.x))
            .collect())
    }

    /// Grouped half-sample variance of the full-ensemble prediction.
    pub fn variance_estimates(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        self.check_schema(cohort)?;
        if self.trees.len() / self.config.group_size < 2 {
            return Err(Error::Estimation("variance needs at least 2 tree groups".into()));
        }
        cohort
            .units()
            .par_iter()
            .map(|u| self.tree_predictions(&u.x).variance())
            .collect()
    }
}

pub fn predict_oob(model: &CausalForestModel, cohort: &Cohort) -> Result<Vec<TauEstimate>> {
    model.predict_oob(cohort)
}

pub fn predict(model: &CausalForestModel, cohort: &Cohort) -> Result<Vec<TauEstimate>> {
    model.predict(cohort)
}

pub fn variance_estimates(model: &CausalForestModel, cohort: &Cohort) -> Result<Vec<f64>> {
    model.variance_estimates(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouped_variance_formula() {
        let same = GroupPredictions {
            group_size: 2,
            values: vec![0.3; 8],
        };
        assert_eq!(same.variance().unwrap(), 0.0);
        // group means 0 and 1, within variances 0.5 each
        let g = GroupPredictions {
            group_size: 2,
            values: vec![-0.5, 0.5, 0.5, 1.5],
        };
        // between = 0.5, within/2 = 0.25
        assert!((g.variance().unwrap() - 0.25).abs() < 1e-15);
        let one = GroupPredictions {
            group_size: 2,
            values: vec![1.0, 2.0],
        };
        assert!(one.variance().is_err());
    }
}
