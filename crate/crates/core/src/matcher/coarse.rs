use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A candidate pairing of two level-1 nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseMatch {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// `exp(−‖a − b‖²)` between every row of `fx` and every row of `fy`.
pub fn coarse_scores(fx: &DMatrix<f64>, fy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if fx.ncols() != fy.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "feature widths differ: {} vs {}",
            fx.ncols(),
            fy.ncols()
        )));
    }
    let (m, n) = (fx.nrows(), fy.nrows());
    // Row-contiguous copies keep the inner loop cache friendly.
    let xt = fx.transpose();
    let yt = fy.transpose();
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = xt.column(i);
            let yt = &yt;
            (0..n).map(move |j| {
                let d2: f64 = a.iter().zip(yt.column(j).iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                (-d2).exp()
            })
        })
        .collect();
    Ok(DMatrix::from_row_slice(m, n, &values))
}

/// The `k` largest entries, sorted descending with ties broken by `(row,
/// col)`. A `k` beyond the matrix size is clamped.
pub fn topk_matches(scores: &DMatrix<f64>, k: usize) -> Vec<CoarseMatch> {
    let (m, n) = scores.shape();
    let total = m * n;
    if k > total {
        log::warn!("top-k clamped from {k} to {total}");
    }
    let k = k.min(total);
    if k == 0 {
        return Vec::new();
    }
    let mut entries: Vec<CoarseMatch> = (0..m)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .map(|(x, y)| CoarseMatch {
            x,
            y,
            score: scores[(x, y)],
        })
        .collect();
    let order = |a: &CoarseMatch, b: &CoarseMatch| {
        b.score
            .total_cmp(&a.score)
            .then(a.x.cmp(&b.x))
            .then(a.y.cmp(&b.y))
    };
    if k < total {
        entries.select_nth_unstable_by(k - 1, order);
        entries.truncate(k);
    }
    entries.sort_unstable_by(order);
    entries
}

/// Members of every coarse node, given each fine point's coarse ancestor.
/// Members are listed in ascending fine index.
pub fn group_point_to_node(ancestors: &[usize], coarse_count: usize) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); coarse_count];
    for (fine, &node) in ancestors.iter().enumerate() {
        groups
            .get_mut(node)
            .ok_or_else(|| Error::InvalidArgument(format!("ancestor {node} out of range")))?
            .push(fine);
    }
    Ok(groups)
}

/// Composes a fine → mid map with a mid → coarse map.
pub fn compose_parents(fine_to_mid: &[usize], mid_to_coarse: &[usize]) -> Result<Vec<usize>> {
    fine_to_mid
        .iter()
        .map(|&p| {
            mid_to_coarse
                .get(p)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("parent {p} out of range")))
        })
        .collect()
}
