//! Subsample and honesty-split draws.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Units drawn from each sampled cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClusterUnits {
    #[default]
    All,
    Half,
}

/// How rows are grouped for subsampling.
#[derive(Debug, Clone)]
pub(crate) enum SamplingFrame {
    Units { rows: Vec<u32> },
    Clusters { members: Vec<Vec<u32>>, units: ClusterUnits },
}

impl SamplingFrame {
    /// Cluster frame when at least two clusters exist, unit frame otherwise.
    pub fn new(rows: Vec<u32>, cluster_of: &[u32], cluster_aware: bool, units: ClusterUnits) -> Self {
        if cluster_aware {
            let mut ids: Vec<u32> = rows.iter().map(|&r| cluster_of[r as usize]).collect();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() >= 2 {
                let mut members = vec![Vec::new(); ids.len()];
                for &r in &rows {
                    let k = ids.binary_search(&cluster_of[r as usize]).expect("cluster listed");
                    members[k].push(r);
                }
                return SamplingFrame::Clusters { members, units };
            }
        }
        SamplingFrame::Units { rows }
    }

    fn n_items(&self) -> usize {
        match self {
            SamplingFrame::Units { rows } => rows.len(),
            SamplingFrame::Clusters { members, .. } => members.len(),
        }
    }

    /// Subset of sampling items (rows or clusters) for one tree group.
    pub fn draw_group<R: Rng>(&self, group_size: usize, rng: &mut R) -> Vec<usize> {
        let n = self.n_items();
        let mut items: Vec<usize> = (0..n).collect();
        if group_size > 1 {
            items.shuffle(rng);
            items.truncate((n / 2).max(1));
        }
        items
    }

    /// Rows of one tree drawn from its group's items.
    pub fn draw_tree<R: Rng>(&self, group: &[usize], fraction: f64, rng: &mut R) -> Vec<u32> {
        let n = self.n_items();
        let take = ((fraction * n as f64).round() as usize).clamp(1, group.len());
        let mut items = group.to_vec();
        if take < items.len() {
            items.shuffle(rng);
            items.truncate(take);
        }
        let mut rows = match self {
            SamplingFrame::Units { rows } => items.iter().map(|&k| rows[k]).collect(),
            SamplingFrame::Clusters { members, units } => {
                let mut out = Vec::new();
                for &k in &items {
                    let m = &members[k];
                    match units {
                        ClusterUnits::All => out.extend_from_slice(m),
                        ClusterUnits::Half => {
                            let mut m = m.clone();
                            m.shuffle(rng);
                            m.truncate(m.len().div_ceil(2));
                            out.extend(m);
                        }
                    }
                }
                out
            }
        };
        rows.sort_unstable();
        rows
    }
}

/// Random honesty split of a tree's rows into (structure, estimation).
pub(crate) fn honest_split<R: Rng>(mut rows: Vec<u32>, fraction: f64, rng: &mut R) -> (Vec<u32>, Vec<u32>) {
    rows.shuffle(rng);
    let k = ((fraction * rows.len() as f64).round() as usize).min(rows.len());
    let estimation = rows.split_off(k);
    (rows, estimation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn cluster_frame_samples_half_the_clusters() {
        let cluster_of: Vec<u32> = (0..100).map(|i| (i % 10) as u32 + 1).collect();
        let frame = SamplingFrame::new((0..100).collect(), &cluster_of, true, ClusterUnits::All);
        let mut rng = stream(1, Domain::GroupSample, 0);
        let group = frame.draw_group(2, &mut rng);
        assert_eq!(group.len(), 5);
        let rows = frame.draw_tree(&group, 0.5, &mut rng);
        assert_eq!(rows.len(), 50);
        let mut clusters: Vec<u32> = rows.iter().map(|&r| cluster_of[r as usize]).collect();
        clusters.dedup();
        clusters.sort_unstable();
        clusters.dedup();
        assert_eq!(clusters.len(), 5);
    }

    #[test]
    fn single_cluster_falls_back_to_units() {
        let frame = SamplingFrame::new((0..10).collect(), &[1; 10], true, ClusterUnits::All);
        assert!(matches!(frame, SamplingFrame::Units { .. }));
    }

    #[test]
    fn honesty_halves_are_disjoint() {
        let mut rng = stream(3, Domain::TreeSample, 0);
        let (s, e) = honest_split((0..11).collect(), 0.5, &mut rng);
        assert_eq!(s.len() + e.len(), 11);
        assert!(s.iter().all(|r| !e.contains(r)));
    }
}
