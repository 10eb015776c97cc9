use rayon::prelude::*;

use super::kdtree::{dist2, KdTree};
use super::PointCloud;
use crate::error::{Error, Result};

/// Fixed-width neighbor lists, one row per query.
///
/// Rows produced by [`knn`] are sorted by ascending distance. When the cloud
/// has fewer than `k` points the row is padded by repeating its nearest
/// neighbor and the padding is marked invalid in the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborTable {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
    valid: Vec<bool>,
}

impl NeighborTable {
    /// Builds a table from row-major parts without imposing an ordering.
    pub fn from_parts(
        k: usize,
        indices: Vec<usize>,
        distances: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("neighbor count must be >= 1".into()));
        }
        if indices.len() % k != 0 || distances.len() != indices.len() || valid.len() != indices.len()
        {
            return Err(Error::DimensionMismatch(
                "neighbor table parts have inconsistent lengths".into(),
            ));
        }
        Ok(Self {
            k,
            indices,
            distances,
            valid,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn row_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    pub fn row_mask(&self, i: usize) -> &[bool] {
        &self.valid[i * self.k..(i + 1) * self.k]
    }

    /// Iterator over the valid `(index, distance)` entries of row `i`.
    pub fn valid_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i)
            .iter()
            .zip(self.row_distances(i))
            .zip(self.row_mask(i))
            .filter(|(_, &ok)| ok)
            .map(|((&j, &d), _)| (j, d))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}

fn check_k(cloud: &PointCloud, k: usize) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(())
}

fn assemble(k: usize, rows: Vec<Vec<(f64, usize)>>) -> NeighborTable {
    let mut indices = Vec::with_capacity(rows.len() * k);
    let mut distances = Vec::with_capacity(rows.len() * k);
    let mut valid = Vec::with_capacity(rows.len() * k);
    for row in rows {
        let (nearest_d2, nearest) = row[0];
        for slot in 0..k {
            match row.get(slot) {
                Some(&(d2, j)) => {
                    indices.push(j);
                    distances.push(d2.sqrt());
                    valid.push(true);
                }
                None => {
                    indices.push(nearest);
                    distances.push(nearest_d2.sqrt());
                    valid.push(false);
                }
            }
        }
    }
    NeighborTable {
        k,
        indices,
        distances,
        valid,
    }
}

/// The `k` nearest points of `cloud` for every point of `queries`.
pub fn knn(cloud: &PointCloud, queries: &PointCloud, k: usize) -> Result<NeighborTable> {
    check_k(cloud, k)?;
    let tree = KdTree::new(cloud.points());
    let rows = queries
        .points()
        .par_iter()
        .map(|q| tree.nearest(q, k))
        .collect();
    Ok(assemble(k, rows))
}

/// Exhaustive O(N·M) version of [`knn`] with the same tie-breaking.
pub fn knn_brute_force(cloud: &PointCloud, queries: &PointCloud, k: usize) -> Result<NeighborTable> {
    check_k(cloud, k)?;
    let rows = queries
        .points()
        .iter()
        .map(|q| {
            let mut all: Vec<(f64, usize)> = cloud
                .points()
                .iter()
                .enumerate()
                .map(|(j, p)| (dist2(q, p), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.truncate(k);
            all
        })
        .collect();
    Ok(assemble(k, rows))
}
