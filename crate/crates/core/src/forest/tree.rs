//! Honest tree growth shared by the causal and regression forests.
//!
//! Structure units choose splits; estimation units only contribute their
//! treatment-arm counts (to enforce leaf minimums) and, after growth, the
//! node values. Outcomes of estimation units never reach the split search.

use std::ops::{AddAssign, Sub};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::RankedFeatures;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split column, `u32::MAX` for leaves.
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Estimate at this node (leaf effect, or the back-off value for
    /// internal nodes).
    pub value: f64,
    /// Estimation-sample counts (treated, control). Regression trees store
    /// the unit count in `n_treated`.
    pub n_treated: u32,
    pub n_control: u32,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// A single-leaf tree holding `value`.
    pub fn constant(value: f64) -> Self {
        Tree {
            nodes: vec![Node {
                feature: LEAF,
                threshold: 0.0,
                left: 0,
                right: 0,
                value,
                n_treated: 0,
                n_control: 0,
            }],
        }
    }

    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        Tree { nodes }
    }

    /// Index of the leaf reached by `x` (go left when `x[feature] <= threshold`).
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            if node.is_leaf() {
                return k;
            }
            k = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// `(feature, threshold)` of every internal node in storage order.
    pub fn splits(&self) -> Vec<(u32, f64)> {
        self.nodes
            .iter()
            .filter(|n| !n.is_leaf())
            .map(|n| (n.feature, n.threshold))
            .collect()
    }

    pub(crate) fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for n in &mut self.nodes {
            n.value = f(n.value);
        }
    }
}

/// Per-bin sufficient statistics of a split criterion.
pub(crate) trait BinStats: Copy + Default + AddAssign + Sub<Output = Self> + Send {
    fn has_structure(&self) -> bool;
    fn is_empty(&self) -> bool;
}

/// Node estimate with its estimation-sample arm counts.
pub(crate) struct NodeEstimate {
    pub value: Option<f64>,
    pub n_treated: u32,
    pub n_control: u32,
}

pub(crate) trait Criterion: Sync {
    type Stats: BinStats;

    fn structure_unit(&self, row: u32) -> Self::Stats;
    fn estimation_unit(&self, row: u32) -> Self::Stats;
    /// Split score, or `None` when either child violates leaf minimums.
    fn score(&self, left: &Self::Stats, right: &Self::Stats) -> Option<f64>;
    /// Score of leaving the node unsplit; a split must beat it.
    fn baseline(&self, parent: &Self::Stats) -> Option<f64>;
    fn estimate(&self, estimation_rows: &[u32]) -> NodeEstimate;
}

pub(crate) struct GrowParams {
    pub mtry: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    split_code: u32,
    score: f64,
}

struct Scratch<S> {
    dense: Vec<S>,
    bins: Vec<(u32, S)>,
    between: Vec<(u32, S)>,
    keyed: Vec<(u32, u32, bool)>,
    features: Vec<usize>,
}

/// Grow one honest tree. `structure` and `estimation` are disjoint row sets
/// of `data`; both are reordered in place.
pub(crate) fn grow<C: Criterion, R: Rng>(
    data: &RankedFeatures,
    criterion: &C,
    structure: &mut [u32],
    estimation: &mut [u32],
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let p = data.n_features();
    let mtry = params.mtry.clamp(1, p.max(1));
    let mut scratch = Scratch {
        dense: vec![C::Stats::default(); data.max_distinct()],
        bins: Vec::new(),
        between: Vec::new(),
        keyed: Vec::new(),
        features: Vec::with_capacity(mtry),
    };

    let mut nodes: Vec<Node> = Vec::new();
    // (node, structure range, estimation range, parent value)
    let mut stack: Vec<(usize, (usize, usize), (usize, usize), f64)> = Vec::new();
    nodes.push(Tree::constant(0.0).nodes[0]);
    stack.push((0, (0, structure.len()), (0, estimation.len()), 0.0));

    while let Some((id, (s0, s1), (e0, e1), parent_value)) = stack.pop() {
        let est = criterion.estimate(&estimation[e0..e1]);
        let value = est.value.unwrap_or(parent_value);
        nodes[id].value = value;
        nodes[id].n_treated = est.n_treated;
        nodes[id].n_control = est.n_control;

        if p == 0 {
            continue;
        }
        scratch.features.clear();
        scratch
            .features
            .extend(sample(rng, p, mtry));
        scratch.features.sort_unstable();

        let s_rows = &structure[s0..s1];
        let e_rows = &estimation[e0..e1];
        let mut parent = C::Stats::default();
        for &r in s_rows {
            parent += criterion.structure_unit(r);
        }
        for &r in e_rows {
            parent += criterion.estimation_unit(r);
        }
        let Some(baseline) = criterion.baseline(&parent) else {
            continue;
        };

        let mut best: Option<Candidate> = None;
        let features = std::mem::take(&mut scratch.features);
        for &j in &features {
            collect_bins(data, criterion, j, s_rows, e_rows, &mut scratch);
            scan_bins(data, criterion, j, &parent, &mut best, &mut scratch);
        }
        scratch.features = features;

        let Some(split) = best.filter(|b| b.score > baseline) else {
            continue;
        };
        let codes = &data.column(split.feature).codes;
        let goes_left = |r: &u32| codes[*r as usize] <= split.split_code;
        let s_mid = s0 + partition(&mut structure[s0..s1], goes_left);
        let e_mid = e0 + partition(&mut estimation[e0..e1], goes_left);

        let left = nodes.len() as u32;
        nodes.push(Tree::constant(0.0).nodes[0]);
        nodes.push(Tree::constant(0.0).nodes[0]);
        let node = &mut nodes[id];
        node.feature = split.feature as u32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = left + 1;
        stack.push((left as usize + 1, (s_mid, s1), (e_mid, e1), value));
        stack.push((left as usize, (s0, s_mid), (e0, e_mid), value));
    }
    Tree { nodes }
}

fn partition(rows: &mut [u32], pred: impl Fn(&u32) -> bool) -> usize {
    let mut i = 0;
    for k in 0..rows.len() {
        if pred(&rows[k]) {
            rows.swap(i, k);
            i += 1;
        }
    }
    i
}

fn collect_bins<C: Criterion>(
    data: &RankedFeatures,
    criterion: &C,
    j: usize,
    s_rows: &[u32],
    e_rows: &[u32],
    scratch: &mut Scratch<C::Stats>,
) {
    let column = data.column(j);
    let codes = &column.codes;
    scratch.bins.clear();
    let m = s_rows.len() + e_rows.len();
    let distinct = column.values.len() as u32;
    let (lo, hi) = if (distinct as usize) <= 4 * m {
        (0, distinct.saturating_sub(1))
    } else {
        let (mut lo, mut hi) = (u32::MAX, 0u32);
        for &r in s_rows.iter().chain(e_rows) {
            let c = codes[r as usize];
            lo = lo.min(c);
            hi = hi.max(c);
        }
        (lo, hi)
    };
    if m == 0 || lo > hi {
        return;
    }
    let range = (hi - lo) as usize + 1;
    if range <= 4 * m {
        let dense = &mut scratch.dense[lo as usize..=hi as usize];
        for &r in s_rows {
            dense[(codes[r as usize] - lo) as usize] += criterion.structure_unit(r);
        }
        for &r in e_rows {
            dense[(codes[r as usize] - lo) as usize] += criterion.estimation_unit(r);
        }
        for (k, slot) in dense.iter_mut().enumerate() {
            let st = std::mem::take(slot);
            if !st.is_empty() {
                scratch.bins.push((lo + k as u32, st));
            }
        }
    } else {
        scratch.keyed.clear();
        scratch
            .keyed
            .extend(s_rows.iter().map(|&r| (codes[r as usize], r, true)));
        scratch
            .keyed
            .extend(e_rows.iter().map(|&r| (codes[r as usize], r, false)));
        scratch.keyed.sort_unstable();
        for &(c, r, is_structure) in &scratch.keyed {
            let st = if is_structure {
                criterion.structure_unit(r)
            } else {
                criterion.estimation_unit(r)
            };
            match scratch.bins.last_mut() {
                Some((code, acc)) if *code == c => *acc += st,
                _ => scratch.bins.push((c, st)),
            }
        }
    }
}

fn scan_bins<C: Criterion>(
    data: &RankedFeatures,
    criterion: &C,
    j: usize,
    total: &C::Stats,
    best: &mut Option<Candidate>,
    scratch: &mut Scratch<C::Stats>,
) {
    let values = &data.column(j).values;
    let mut left = C::Stats::default();
    let mut prev: Option<u32> = None;
    scratch.between.clear();
    for &(code, st) in &scratch.bins {
        if !st.has_structure() {
            if prev.is_none() {
                left += st;
            } else {
                scratch.between.push((code, st));
            }
            continue;
        }
        if let Some(a) = prev {
            // Cut between `a` and the next value present in the node, so no
            // node unit sits between the threshold and its neighbours and
            // the partition does not depend on floating-point midpoints.
            let next = scratch.between.first().map_or(code, |b| b.0);
            let (va, vb) = (values[a as usize], values[next as usize]);
            let mut threshold = va + (vb - va) / 2.0;
            if threshold >= vb {
                threshold = va;
            }
            let right = *total - left;
            if let Some(score) = criterion.score(&left, &right) {
                if best.is_none_or(|b| score > b.score) {
                    *best = Some(Candidate {
                        feature: j,
                        threshold,
                        split_code: a,
                        score,
                    });
                }
            }
            for &(_, bst) in &scratch.between {
                left += bst;
            }
            scratch.between.clear();
        }
        left += st;
        prev = Some(code);
    }
}
