use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Training covariates stored column-major as ranks into each column's
/// sorted distinct values. Splits are searched over ranks, so any strictly
/// increasing transform of a column yields the same partitions.
#[derive(Debug, Clone)]
pub struct RankedFeatures {
    n: usize,
    columns: Vec<RankedColumn>,
}

#[derive(Debug, Clone)]
pub(crate) struct RankedColumn {
    pub codes: Vec<u32>,
    pub values: Vec<f64>,
}

impl RankedColumn {
    fn new(raw: &[f64]) -> Self {
        let mut values: Vec<f64> = raw.to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let codes = raw
            .iter()
            .map(|v| values.partition_point(|u| u < v) as u32)
            .collect();
        RankedColumn { codes, values }
    }
}

impl RankedFeatures {
    /// Build from row-major design vectors.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        let columns = (0..p)
            .into_par_iter()
            .map(|j| {
                let raw: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                RankedColumn::new(&raw)
            })
            .collect();
        RankedFeatures { n, columns }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub(crate) fn column(&self, j: usize) -> &RankedColumn {
        &self.columns[j]
    }

    pub(crate) fn max_distinct(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).max().unwrap_or(0)
    }
}

/// Fixed-size bit set over training rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    len: usize,
    words: Vec<u64>,
}

impl Membership {
    pub fn empty(len: usize) -> Self {
        Membership {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_rows(len: usize, rows: &[u32]) -> Self {
        let mut m = Self::empty(len);
        for &r in rows {
            m.insert(r as usize);
        }
        m
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &Membership) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }
}
