//! The Proxy Match Transform layer.
//!
//! A layer maps per-point features `F` (`|X| × D_emb`) into a shared proxy
//! space of width `D_proxy`:
//!
//! ```text
//! PMT(F) = Σ_h  A^(h) · F · P^(h)ᵀ · w^(h)
//! ```
//!
//! `A^(h)` is a sparse, distance-driven attention over each point's
//! neighborhood and `P^(h)` is a proxy tensor shared by both sides of a
//! match. Only the side weights `w_X`, `w_Y` differ between the two sides.
//! When the proxies are mutually orthonormal, the dot products of the two
//! outputs reproduce a second-order convolution of the feature correlation
//! (see [`crate::hdc`]), without ever forming the `|X| × |Y|` correlation.

mod attention;
mod constraints;
mod proxy;

pub use attention::{build_attention, build_scoped_attention, SparseAttention};
pub use constraints::{
    constraint_grad, constraint_losses, constraint_losses_weighted, fit_proxies, fit_proxies_weighted,
    ConstraintLoss, ConstraintWeights, FitResult,
};
pub use proxy::{init_proxies, AttentionScope, PmtLayerConfig, ProxyInit, ProxySet, Side, PROXY_MAGIC};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const LEAKY_RELU_SLOPE: f64 = 0.1;
pub const GROUP_NORM_GROUPS: usize = 4;
pub const GROUP_NORM_EPS: f64 = 1e-5;

/// One PMT application on one side.
pub fn pmt_forward(f: &FeatureMatrix, a: &SparseAttention, p: &ProxySet, side: Side) -> Result<FeatureMatrix> {
    let out = pmt_forward_raw(f.data(), a, p, side)?;
    FeatureMatrix::new(out, f.level())
}

/// [`pmt_forward`] on a bare matrix.
pub fn pmt_forward_raw(f: &DMatrix<f64>, a: &SparseAttention, p: &ProxySet, side: Side) -> Result<DMatrix<f64>> {
    if f.ncols() != p.d_emb() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns but proxies expect D_emb = {}",
            f.ncols(),
            p.d_emb()
        )));
    }
    if a.rows() != f.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "attention has {} rows for {} feature rows",
            a.rows(),
            f.nrows()
        )));
    }
    if a.heads() != p.heads() {
        return Err(Error::DimensionMismatch(format!(
            "attention has {} heads, proxies {}",
            a.heads(),
            p.heads()
        )));
    }
    if a.table().max_index().is_some_and(|m| m >= f.nrows()) {
        return Err(Error::DimensionMismatch("attention references rows outside the feature matrix".into()));
    }

    let n = f.nrows();
    let dp = p.d_proxy();
    let weights = p.weights(side);
    // Column j of `projected[h]` is row j of F·P_hᵀ, stored contiguously.
    let ft = f.transpose();
    let projected: Vec<Option<DMatrix<f64>>> = (0..p.heads())
        .map(|h| (weights[h] != 0.0).then(|| p.proxy(h) * &ft))
        .collect();
    let table = a.table();
    let mut out_t = vec![0.0; n * dp];
    out_t.par_chunks_mut(dp).enumerate().for_each(|(i, col)| {
        for (h, proj) in projected.iter().enumerate() {
            let Some(proj) = proj else { continue };
            for (&j, &aij) in table.row(i).iter().zip(a.row(h, i)) {
                if aij == 0.0 {
                    continue;
                }
                let scale = aij * weights[h];
                for (o, v) in col.iter_mut().zip(proj.column(j).iter()) {
                    *o += scale * v;
                }
            }
        }
    });
    Ok(DMatrix::from_vec(dp, n, out_t).transpose())
}

/// Leaky ReLU followed by per-row group normalization.
pub fn activate_and_normalize(m: &mut DMatrix<f64>) {
    m.apply(|v| {
        if *v < 0.0 {
            *v *= LEAKY_RELU_SLOPE;
        }
    });
    group_norm_rows(m, GROUP_NORM_GROUPS, GROUP_NORM_EPS);
}

/// Normalizes each contiguous column group of every row to zero mean and
/// unit variance. Groups shrink to the column count when it is smaller.
pub fn group_norm_rows(m: &mut DMatrix<f64>, groups: usize, eps: f64) {
    let cols = m.ncols();
    if cols == 0 {
        return;
    }
    let groups = groups.clamp(1, cols);
    let bounds: Vec<(usize, usize)> = (0..groups)
        .map(|g| (g * cols / groups, (g + 1) * cols / groups))
        .collect();
    for i in 0..m.nrows() {
        for &(lo, hi) in &bounds {
            let len = (hi - lo) as f64;
            let mean = (lo..hi).map(|c| m[(i, c)]).sum::<f64>() / len;
            let var = (lo..hi).map(|c| (m[(i, c)] - mean).powi(2)).sum::<f64>() / len;
            let inv = 1.0 / (var + eps).sqrt();
            for c in lo..hi {
                m[(i, c)] = (m[(i, c)] - mean) * inv;
            }
        }
    }
}

/// One layer of a [`pmt_stack`].
#[derive(Clone, Copy, Debug)]
pub struct StackLayer<'a> {
    pub attention: &'a SparseAttention,
    pub proxies: &'a ProxySet,
}

/// Applies layers in order, with leaky ReLU and group norm between
/// consecutive layers (not after the last one).
pub fn pmt_stack(f: &FeatureMatrix, layers: &[StackLayer<'_>], side: Side) -> Result<FeatureMatrix> {
    for pair in layers.windows(2) {
        if pair[0].proxies.d_proxy() != pair[1].proxies.d_emb() {
            return Err(Error::DimensionMismatch(format!(
                "layer chain breaks: D_proxy {} feeds D_emb {}",
                pair[0].proxies.d_proxy(),
                pair[1].proxies.d_emb()
            )));
        }
    }
    let mut current = f.data().clone();
    for (i, layer) in layers.iter().enumerate() {
        if i > 0 {
            activate_and_normalize(&mut current);
        }
        current = pmt_forward_raw(&current, layer.attention, layer.proxies, side)?;
    }
    FeatureMatrix::new(current, f.level())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{knn, NeighborTable, PointCloud};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_attention(n: usize, heads: usize) -> SparseAttention {
        let table = NeighborTable::from_parts(1, (0..n).collect(), vec![0.0; n], vec![true; n]).unwrap();
        build_attention(&table, &vec![1.0; heads]).unwrap()
    }

    fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
        FeatureMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0)), 1).unwrap()
    }

    #[test]
    fn identity_layer_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_features(&mut rng, 5, 3);
        let p = ProxySet::new(vec![DMatrix::identity(3, 3)], vec![1.0], vec![1.0]).unwrap();
        let out = pmt_forward(&f, &identity_attention(5, 1), &p, Side::X).unwrap();
        assert_eq!(out.data(), f.data());
    }

    #[test]
    fn zero_side_weights_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_features(&mut rng, 4, 6);
        let cfg = PmtLayerConfig::new(3, 6, 5, AttentionScope::Local);
        let p = init_proxies(&cfg, ProxyInit::Practical, 3)
            .unwrap()
            .with_weights(vec![1.0; 3], vec![0.0; 3])
            .unwrap();
        let out = pmt_forward(&f, &identity_attention(4, 3), &p, Side::Y).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_features(&mut rng, 4, 6);
        let p = ProxySet::new(vec![DMatrix::identity(5, 5)], vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(
            pmt_forward(&f, &identity_attention(4, 1), &p, Side::X),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn empty_stack_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_features(&mut rng, 4, 6);
        assert_eq!(pmt_stack(&f, &[], Side::X).unwrap(), f);
    }

    #[test]
    fn fine_chain_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 3]> = (0..40).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let cloud = PointCloud::from_slices(&pts).unwrap();
        let a = build_attention(&knn(&cloud, &cloud, 16).unwrap(), &[0.05, 0.1, 0.2, 0.4]).unwrap();
        let p1 = init_proxies(&PmtLayerConfig::new(4, 256, 16, AttentionScope::Local), ProxyInit::Practical, 1).unwrap();
        let p2 = init_proxies(&PmtLayerConfig::new(4, 16, 64, AttentionScope::Local), ProxyInit::Feasible, 2).unwrap();
        let f = random_features(&mut rng, 40, 256);
        let layers = [
            StackLayer { attention: &a, proxies: &p1 },
            StackLayer { attention: &a, proxies: &p2 },
        ];
        let out = pmt_stack(&f, &layers, Side::X).unwrap();
        assert_eq!((out.rows(), out.dim()), (40, 64));
        let broken = [layers[1], layers[0]];
        assert!(pmt_stack(&f, &broken, Side::X).is_err());
    }

    #[test]
    fn group_norm_standardizes_groups() {
        let mut m = DMatrix::from_row_slice(1, 8, &[1.0, 2.0, 3.0, 4.0, 10.0, 10.0, -1.0, 1.0]);
        group_norm_rows(&mut m, 4, 1e-30);
        assert!((m[(0, 0)] + 1.0).abs() < 1e-12 && (m[(0, 1)] - 1.0).abs() < 1e-12);
        assert_eq!(m[(0, 4)], 0.0);
        assert!((m[(0, 7)] - 1.0).abs() < 1e-12);
    }
}
