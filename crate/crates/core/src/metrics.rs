//! Pair-counting agreement between two clusterings of the same items.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Co-assignment counts between two labelings; rows follow the sorted
/// distinct labels of the first, columns those of the second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix<A, B> {
    pub row_labels: Vec<A>,
    pub col_labels: Vec<B>,
    pub counts: Vec<Vec<u64>>,
}

impl<A: Ord + Copy, B: Ord + Copy> ConfusionMatrix<A, B> {
    pub fn new(a: &[A], b: &[B]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "labelings have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let index = |xs: &[A]| -> BTreeMap<A, usize> {
            let mut m: BTreeMap<A, usize> = xs.iter().map(|&x| (x, 0)).collect();
            m.values_mut().enumerate().for_each(|(i, v)| *v = i);
            m
        };
        let rows = index(a);
        let mut cols: BTreeMap<B, usize> = b.iter().map(|&x| (x, 0)).collect();
        cols.values_mut().enumerate().for_each(|(i, v)| *v = i);
        let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
        for (x, y) in a.iter().zip(b) {
            counts[rows[x]][cols[y]] += 1;
        }
        Ok(Self {
            row_labels: rows.into_keys().collect(),
            col_labels: cols.into_keys().collect(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn pair_sums(&self) -> (f64, f64, f64, f64) {
        let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
        let cells: f64 = self.counts.iter().flatten().map(|&c| pairs(c)).sum();
        let rows: f64 = self.counts.iter().map(|r| pairs(r.iter().sum())).sum();
        let cols: f64 = (0..self.col_labels.len())
            .map(|j| pairs(self.counts.iter().map(|r| r[j]).sum()))
            .sum();
        (cells, rows, cols, pairs(self.total()))
    }
}

/// Fraction of item pairs on which the two labelings agree (both together
/// or both apart). Defined as 1 for fewer than two items.
pub fn rand_index<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> Result<f64> {
    let (cells, rows, cols, total) = ConfusionMatrix::new(a, b)?.pair_sums();
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok((total + 2.0 * cells - rows - cols) / total)
}

/// Hubert-Arabie adjusted Rand index. Returns 1 when the chance-corrected
/// denominator vanishes (e.g. both labelings constant).
pub fn adjusted_rand_index<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> Result<f64> {
    let (cells, rows, cols, total) = ConfusionMatrix::new(a, b)?.pair_sums();
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((cells - expected) / denom)
}
