use rayon::prelude::*;

use super::AttentionScope;
use crate::error::{Error, Result};
use crate::geometry::{knn, NeighborTable, PointCloud};

/// Per-head attention weights laid out like a [`NeighborTable`]: row `i`,
/// slot `s` weighs neighbor `table.row(i)[s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAttention {
    table: NeighborTable,
    weights: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

impl SparseAttention {
    /// Wraps precomputed weights. Entries must be finite and nonnegative and
    /// masked slots must be exactly zero; rows are not renormalized.
    pub fn from_parts(table: NeighborTable, weights: Vec<Vec<f64>>, bandwidths: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("attention needs at least one head".into()));
        }
        let len = table.rows() * table.k();
        if weights.iter().any(|w| w.len() != len) {
            return Err(Error::DimensionMismatch("attention weights do not match the neighbor table".into()));
        }
        if bandwidths.len() != weights.len() {
            return Err(Error::DimensionMismatch("one bandwidth per head expected".into()));
        }
        for w in &weights {
            for i in 0..table.rows() {
                let row = &w[i * table.k()..(i + 1) * table.k()];
                for (&v, &ok) in row.iter().zip(table.row_mask(i)) {
                    if !(v.is_finite() && v >= 0.0) || (!ok && v != 0.0) {
                        return Err(Error::InvalidArgument(
                            "attention weights must be nonnegative and zero on padding".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            table,
            weights,
            bandwidths,
        })
    }

    pub fn heads(&self) -> usize {
        self.weights.len()
    }

    pub fn rows(&self) -> usize {
        self.table.rows()
    }

    pub fn table(&self) -> &NeighborTable {
        &self.table
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Weights of row `i` for head `h`, aligned with `table().row(i)`.
    pub fn row(&self, h: usize, i: usize) -> &[f64] {
        let k = self.table.k();
        &self.weights[h][i * k..(i + 1) * k]
    }
}

/// Gaussian distance attention: slot weights `∝ exp(−(d/σ_h)²)` over valid
/// neighbors, normalized per row.
pub fn build_attention(neighbors: &NeighborTable, bandwidths: &[f64]) -> Result<SparseAttention> {
    if bandwidths.is_empty() || bandwidths.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("bandwidths must be positive".into()));
    }
    let k = neighbors.k();
    let weights = bandwidths
        .iter()
        .map(|&sigma| {
            (0..neighbors.rows())
                .into_par_iter()
                .flat_map_iter(|i| {
                    let mask = neighbors.row_mask(i);
                    let logits: Vec<f64> = neighbors
                        .row_distances(i)
                        .iter()
                        .map(|d| -(d / sigma).powi(2))
                        .collect();
                    // Shift by the largest valid logit so exp never underflows to all zeros.
                    let top = logits
                        .iter()
                        .zip(mask)
                        .filter(|(_, &ok)| ok)
                        .map(|(&l, _)| l)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut row: Vec<f64> = logits
                        .iter()
                        .zip(mask)
                        .map(|(&l, &ok)| if ok { (l - top).exp() } else { 0.0 })
                        .collect();
                    let sum: f64 = row.iter().sum();
                    if sum > 0.0 {
                        row.iter_mut().for_each(|v| *v /= sum);
                    }
                    debug_assert_eq!(row.len(), k);
                    row
                })
                .collect()
        })
        .collect();
    SparseAttention::from_parts(neighbors.clone(), weights, bandwidths.to_vec())
}

/// Neighborhoods for the given scope (all points when global) followed by
/// [`build_attention`].
pub fn build_scoped_attention(
    points: &PointCloud,
    scope: AttentionScope,
    neighbors: usize,
    bandwidths: &[f64],
) -> Result<SparseAttention> {
    let k = match scope {
        AttentionScope::Global => points.len(),
        AttentionScope::Local => neighbors,
    };
    build_attention(&knn(points, points, k)?, bandwidths)
}
