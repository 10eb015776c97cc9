//! Dense second-order convolution over pairs of lattice points, its
//! shift-attention rewrite, and the executable check that two PMT outputs
//! with orthonormal proxies reproduce it.
//!
//! For lattices `X`, `Y` and features `F_X`, `F_Y` the convolution is
//!
//! ```text
//! Conv(x, y) = Σ_{(n, m) ∈ N(x) × N(y)} C(n, m) · K(n − x, m − y),   C = F_X F_Yᵀ
//! ```
//!
//! with zero padding outside the lattice. Everything here is deliberately
//! dense: it is the quadratic baseline.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NeighborTable, PointCloud, Vec3};
use crate::pmt::{init_proxies, pmt_forward_raw, AttentionScope, PmtLayerConfig, ProxyInit, Side, SparseAttention};

pub type Offset = [i64; 3];

/// A regular integer lattice of `dims[0] × dims[1] × dims[2]` points with
/// unit spacing, indexed x-fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub dims: [usize; 3],
}

impl Lattice {
    pub fn new(dims: [usize; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("lattice dimensions must be >= 1".into()));
        }
        Ok(Self { dims })
    }

    /// A row of `n` points along x.
    pub fn line(n: usize) -> Result<Self> {
        Self::new([n, 1, 1])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, i: usize) -> Offset {
        let [nx, ny, _] = self.dims;
        [(i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64]
    }

    pub fn index(&self, c: Offset) -> Option<usize> {
        let in_range = c.iter().zip(self.dims).all(|(&v, d)| v >= 0 && (v as usize) < d);
        in_range.then(|| {
            let [nx, ny, _] = self.dims;
            c[0] as usize + nx * (c[1] as usize + ny * c[2] as usize)
        })
    }

    /// Index of `i + offset`, or `None` when it leaves the lattice.
    pub fn shifted(&self, i: usize, offset: Offset) -> Option<usize> {
        let c = self.coords(i);
        self.index([c[0] + offset[0], c[1] + offset[1], c[2] + offset[2]])
    }

    pub fn to_cloud(&self) -> PointCloud {
        let points = (0..self.len())
            .map(|i| {
                let c = self.coords(i);
                Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)
            })
            .collect();
        PointCloud::new(points).expect("nonempty lattice")
    }
}

/// A kernel supported on a finite displacement set, one displacement per head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// `(ν, μ)`: the `X`-side and `Y`-side parts of each displacement.
    pub displacements: Vec<(Offset, Offset)>,
    pub weights: Vec<f64>,
    /// `head_map[h]` is the displacement assigned to head `h`.
    pub head_map: Vec<usize>,
}

impl KernelSpec {
    pub fn new(displacements: Vec<(Offset, Offset)>, weights: Vec<f64>, head_map: Vec<usize>) -> Result<Self> {
        let n = displacements.len();
        if n == 0 || weights.len() != n || head_map.len() != n {
            return Err(Error::DimensionMismatch(
                "kernel needs equally many displacements, weights and heads".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &d in &head_map {
            if d >= n || std::mem::replace(&mut seen[d], true) {
                return Err(Error::InvalidArgument("head map must be a bijection".into()));
            }
        }
        for (i, a) in displacements.iter().enumerate() {
            if displacements[..i].contains(a) {
                return Err(Error::InvalidArgument("duplicate displacement".into()));
            }
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("kernel weights"));
        }
        Ok(Self {
            displacements,
            weights,
            head_map,
        })
    }

    /// Weight 1 at the zero displacement.
    pub fn identity() -> Self {
        Self::new(vec![([0; 3], [0; 3])], vec![1.0], vec![0]).expect("valid identity kernel")
    }

    /// All `(ν, μ)` pairs of centered offsets along x (`eps_x` and `eps_y`
    /// of them), with uniform weights in `[-1, 1]` and a shuffled head map.
    pub fn random_line(eps_x: usize, eps_y: usize, rng: &mut impl Rng) -> Result<Self> {
        if eps_x == 0 || eps_y == 0 {
            return Err(Error::InvalidArgument("offset counts must be >= 1".into()));
        }
        let axis = |eps: usize| -> Vec<Offset> {
            let lo = -((eps as i64 - 1) / 2);
            (0..eps as i64).map(|k| [lo + k, 0, 0]).collect()
        };
        let displacements: Vec<(Offset, Offset)> = axis(eps_x)
            .into_iter()
            .flat_map(|nu| axis(eps_y).into_iter().map(move |mu| (nu, mu)))
            .collect();
        let weights = displacements.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut head_map: Vec<usize> = (0..displacements.len()).collect();
        head_map.shuffle(rng);
        Self::new(displacements, weights, head_map)
    }

    pub fn heads(&self) -> usize {
        self.head_map.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * s).collect(),
            ..self.clone()
        }
    }

    /// Distinct `ν` offsets in first-appearance order.
    pub fn x_offsets(&self) -> Vec<Offset> {
        distinct(self.displacements.iter().map(|d| d.0))
    }

    /// Distinct `μ` offsets in first-appearance order.
    pub fn y_offsets(&self) -> Vec<Offset> {
        distinct(self.displacements.iter().map(|d| d.1))
    }
}

fn distinct(items: impl Iterator<Item = Offset>) -> Vec<Offset> {
    let mut out: Vec<Offset> = Vec::new();
    for o in items {
        if !out.contains(&o) {
            out.push(o);
        }
    }
    out
}

/// Dense `C = F_X F_Yᵀ`.
pub fn correlation(fx: &DMatrix<f64>, fy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if fx.ncols() != fy.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "feature widths differ: {} vs {}",
            fx.ncols(),
            fy.ncols()
        )));
    }
    Ok(fx * fy.transpose())
}

/// Bytes held by the dense baseline: the correlation and the output.
pub fn conv2_memory_bytes(nx: usize, ny: usize) -> u64 {
    (nx as u64) * (ny as u64) * 16
}

fn check_features(fx: &DMatrix<f64>, fy: &DMatrix<f64>, lx: &Lattice, ly: &Lattice) -> Result<()> {
    if fx.nrows() != lx.len() || fy.nrows() != ly.len() {
        return Err(Error::DimensionMismatch("feature rows must match lattice sizes".into()));
    }
    Ok(())
}

/// Direct evaluation of the convolution sum over `N(x) × N(y)`.
pub fn conv2_bruteforce(
    fx: &DMatrix<f64>,
    fy: &DMatrix<f64>,
    lx: &Lattice,
    ly: &Lattice,
    kernel: &KernelSpec,
) -> Result<DMatrix<f64>> {
    check_features(fx, fy, lx, ly)?;
    let c = correlation(fx, fy)?;
    let nus = kernel.x_offsets();
    let mus = kernel.y_offsets();
    // Dense kernel table over the ν × μ grid; pairs outside the support are 0.
    let mut table = vec![0.0; nus.len() * mus.len()];
    for ((nu, mu), w) in kernel.displacements.iter().zip(&kernel.weights) {
        let a = nus.iter().position(|o| o == nu).expect("ν listed");
        let b = mus.iter().position(|o| o == mu).expect("μ listed");
        table[a * mus.len() + b] = *w;
    }
    let mut out = DMatrix::zeros(lx.len(), ly.len());
    // Column-major storage: keep `x` innermost so `c` and `out` are walked
    // contiguously.
    for y in 0..ly.len() {
        for x in 0..lx.len() {
            let mut acc = 0.0;
            for (a, nu) in nus.iter().enumerate() {
                let Some(n) = lx.shifted(x, *nu) else { continue };
                for (b, mu) in mus.iter().enumerate() {
                    let Some(m) = ly.shifted(y, *mu) else { continue };
                    acc += c[(n, m)] * table[a * mus.len() + b];
                }
            }
            out[(x, y)] = acc;
        }
    }
    Ok(out)
}

/// [`conv2_bruteforce`] behind a memory cap on the dense buffers.
pub fn conv2_bruteforce_capped(
    fx: &DMatrix<f64>,
    fy: &DMatrix<f64>,
    lx: &Lattice,
    ly: &Lattice,
    kernel: &KernelSpec,
    cap_bytes: u64,
) -> Result<DMatrix<f64>> {
    let required = conv2_memory_bytes(lx.len(), ly.len());
    if required > cap_bytes {
        return Err(Error::MemoryCap {
            required,
            cap: cap_bytes,
        });
    }
    conv2_bruteforce(fx, fy, lx, ly, kernel)
}

/// Binary shift attention over flattened `(x, y)` pairs: entry `r` holds the
/// single column `(n, m)` with `(n, m) − (x, y) = t(h)`, if it exists.
pub fn shift_matrix(lx: &Lattice, ly: &Lattice, displacement: (Offset, Offset)) -> Vec<Option<usize>> {
    let ny = ly.len();
    (0..lx.len() * ny)
        .map(|r| {
            let (x, y) = (r / ny, r % ny);
            let n = lx.shifted(x, displacement.0)?;
            let m = ly.shifted(y, displacement.1)?;
            Some(n * ny + m)
        })
        .collect()
}

/// `Σ_h A^(h) · vec(C) · K(t(h))` with explicit per-head shift matrices.
pub fn lemma1_attention_form(
    fx: &DMatrix<f64>,
    fy: &DMatrix<f64>,
    lx: &Lattice,
    ly: &Lattice,
    kernel: &KernelSpec,
) -> Result<DMatrix<f64>> {
    check_features(fx, fy, lx, ly)?;
    let c = correlation(fx, fy)?;
    let ny = ly.len();
    let mut out = DMatrix::zeros(lx.len(), ny);
    for &d in &kernel.head_map {
        let w = kernel.weights[d];
        for (r, col) in shift_matrix(lx, ly, kernel.displacements[d]).into_iter().enumerate() {
            if let Some(col) = col {
                out[(r / ny, r % ny)] += c[(col / ny, col % ny)] * w;
            }
        }
    }
    Ok(out)
}

/// Per-head one-hot attention selecting `i + offset_of(h)` on one lattice.
pub fn shift_attention(lattice: &Lattice, offsets: &[Offset], head_offsets: &[usize]) -> Result<SparseAttention> {
    let k = offsets.len();
    let n = lattice.len();
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    let mut valid = Vec::with_capacity(n * k);
    for i in 0..n {
        for o in offsets {
            let target = lattice.shifted(i, *o);
            indices.push(target.unwrap_or(i));
            distances.push((o.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt());
            valid.push(target.is_some());
        }
    }
    let table = NeighborTable::from_parts(k, indices, distances, valid)?;
    let weights = head_offsets
        .iter()
        .map(|&slot| {
            (0..n)
                .flat_map(|i| {
                    let mask = table.row_mask(i);
                    (0..k).map(move |s| if s == slot && mask[s] { 1.0 } else { 0.0 })
                })
                .collect()
        })
        .collect();
    SparseAttention::from_parts(table, weights, vec![1.0; head_offsets.len()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub lattice_x: Lattice,
    pub lattice_y: Lattice,
    pub d_emb: usize,
    /// Defaults to `N_h · D_emb` when absent.
    pub d_proxy: Option<usize>,
    pub kernel: KernelSpec,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremDims {
    pub x: usize,
    pub y: usize,
    pub d_emb: usize,
    pub d_proxy: usize,
    pub heads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub seed: u64,
    pub dims: TheoremDims,
    pub max_abs_err: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

/// Builds shift attentions from the kernel's `ν` / `μ` factors, orthonormal
/// proxies with `w_X = K(t(h))` and `w_Y = 1`, and measures
/// `‖PMT(F_X)·PMT(F_Y)ᵀ − Conv(F_X, F_Y)‖_∞`.
pub fn theorem1_check(cfg: &TheoremConfig) -> Result<TheoremReport> {
    let start = Instant::now();
    let heads = cfg.kernel.heads();
    let d_proxy = cfg.d_proxy.unwrap_or(heads * cfg.d_emb);
    let layer = PmtLayerConfig::new(heads, cfg.d_emb, d_proxy, AttentionScope::Local);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let proxies = init_proxies(&layer, ProxyInit::Feasible, rng.random())?;
    let w_x: Vec<f64> = cfg.kernel.head_map.iter().map(|&d| cfg.kernel.weights[d]).collect();
    let proxies = proxies.with_weights(w_x, vec![1.0; heads])?;

    let (lx, ly) = (&cfg.lattice_x, &cfg.lattice_y);
    let fx = DMatrix::from_fn(lx.len(), cfg.d_emb, |_, _| rng.random_range(-1.0..1.0));
    let fy = DMatrix::from_fn(ly.len(), cfg.d_emb, |_, _| rng.random_range(-1.0..1.0));

    let nus = cfg.kernel.x_offsets();
    let mus = cfg.kernel.y_offsets();
    let slot = |list: &[Offset], o: Offset| list.iter().position(|v| *v == o).expect("offset listed");
    let head_nu: Vec<usize> = cfg.kernel.head_map.iter().map(|&d| slot(&nus, cfg.kernel.displacements[d].0)).collect();
    let head_mu: Vec<usize> = cfg.kernel.head_map.iter().map(|&d| slot(&mus, cfg.kernel.displacements[d].1)).collect();
    let ax = shift_attention(lx, &nus, &head_nu)?;
    let ay = shift_attention(ly, &mus, &head_mu)?;

    let px = pmt_forward_raw(&fx, &ax, &proxies, Side::X)?;
    let py = pmt_forward_raw(&fy, &ay, &proxies, Side::Y)?;
    let via_pmt = px * py.transpose();
    let conv = conv2_bruteforce(&fx, &fy, lx, ly, &cfg.kernel)?;
    let max_abs_err = (via_pmt - conv).abs().max();
    Ok(TheoremReport {
        seed: cfg.seed,
        dims: TheoremDims {
            x: lx.len(),
            y: ly.len(),
            d_emb: cfg.d_emb,
            d_proxy,
            heads,
        },
        max_abs_err,
        elapsed_ms: Some(start.elapsed().as_secs_f64() * 1e3),
    })
}

/// The seeded configuration sweep: line lattices of 4 to 8 points, `D_emb`
/// of 2 or 4, and up to 25 heads.
pub fn theorem_sweep_config(seed: u64, d_emb: Option<usize>) -> Result<TheoremConfig> {
    theorem_sweep_config_with(seed, d_emb, None)
}

/// [`theorem_sweep_config`] with a fixed head count, realized as an
/// `ε_X × ε_Y` line kernel with `ε_X` the largest divisor not above `√heads`.
pub fn theorem_sweep_config_with(seed: u64, d_emb: Option<usize>, heads: Option<usize>) -> Result<TheoremConfig> {
    if heads == Some(0) || d_emb == Some(0) {
        return Err(Error::InvalidArgument("heads and D_emb must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=8);
    let d_emb = d_emb.unwrap_or(if rng.random_bool(0.5) { 2 } else { 4 });
    let mut eps_x = rng.random_range(1..=5);
    let mut eps_y = rng.random_range(1..=5);
    if let Some(h) = heads {
        eps_x = (1..=h).take_while(|d| d * d <= h).filter(|d| h % d == 0).last().unwrap_or(1);
        eps_y = h / eps_x;
    }
    let kernel = KernelSpec::random_line(eps_x, eps_y, &mut rng)?;
    Ok(TheoremConfig {
        lattice_x: Lattice::line(n)?,
        lattice_y: Lattice::line(n)?,
        d_emb,
        d_proxy: None,
        kernel,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn fixed_head_counts_factor_into_line_kernels() {
        for h in [1, 4, 6, 7, 12, 25] {
            let cfg = theorem_sweep_config_with(9, Some(2), Some(h)).unwrap();
            assert_eq!(cfg.kernel.heads(), h);
            assert!(theorem1_check(&cfg).unwrap().max_abs_err < 1e-6);
        }
    }

    #[test]
    fn orthonormal_rows_correlate_to_identity() {
        let f = DMatrix::<f64>::identity(3, 3);
        assert_eq!(correlation(&f, &f).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn zero_row_gives_zero_correlation_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut fx = features(&mut rng, 4, 3);
        fx.row_mut(2).fill(0.0);
        let c = correlation(&fx, &features(&mut rng, 5, 3)).unwrap();
        assert!(c.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn correlation_matches_dot_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fx = features(&mut rng, 5, 3);
        let fy = features(&mut rng, 5, 3);
        let c = correlation(&fx, &fy).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..3).map(|k| fx[(i, k)] * fy[(j, k)]).sum();
                assert!((c[(i, j)] - dot).abs() < 1e-12);
            }
        }
        assert!(correlation(&fx, &features(&mut rng, 5, 4)).is_err());
    }

    #[test]
    fn identity_kernel_reproduces_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Lattice::new([3, 2, 1]).unwrap();
        let fx = features(&mut rng, 6, 2);
        let fy = features(&mut rng, 6, 2);
        let k = KernelSpec::identity();
        let c = correlation(&fx, &fy).unwrap();
        assert_eq!(conv2_bruteforce(&fx, &fy, &l, &l, &k).unwrap(), c);
        assert_eq!(lemma1_attention_form(&fx, &fy, &l, &l, &k).unwrap(), c);
    }

    #[test]
    fn ones_kernel_is_a_box_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = Lattice::line(6).unwrap();
        let fx = features(&mut rng, 6, 2);
        let fy = features(&mut rng, 6, 2);
        let mut k = KernelSpec::random_line(3, 3, &mut rng).unwrap();
        k.weights.iter_mut().for_each(|w| *w = 1.0);
        let c = correlation(&fx, &fy).unwrap();
        let out = conv2_bruteforce(&fx, &fy, &l, &l, &k).unwrap();
        for x in 0..6i64 {
            for y in 0..6i64 {
                let mut boxed = 0.0;
                for n in (x - 1).max(0)..=(x + 1).min(5) {
                    for m in (y - 1).max(0)..=(y + 1).min(5) {
                        boxed += c[(n as usize, m as usize)];
                    }
                }
                assert!((out[(x as usize, y as usize)] - boxed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_kernel_everywhere_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = Lattice::line(4).unwrap();
        let fx = features(&mut rng, 4, 2);
        let fy = features(&mut rng, 4, 2);
        let k = KernelSpec::random_line(2, 3, &mut rng).unwrap().scaled(0.0);
        assert!(conv2_bruteforce(&fx, &fy, &l, &l, &k).unwrap().iter().all(|&v| v == 0.0));
        assert!(lemma1_attention_form(&fx, &fy, &l, &l, &k).unwrap().iter().all(|&v| v == 0.0));
        let report = theorem1_check(&TheoremConfig {
            lattice_x: l,
            lattice_y: l,
            d_emb: 2,
            d_proxy: None,
            kernel: k,
            seed: 5,
        })
        .unwrap();
        assert_eq!(report.max_abs_err, 0.0);
    }

    #[test]
    fn nine_head_line_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let kernel = KernelSpec::random_line(3, 3, &mut rng).unwrap();
        let l = Lattice::line(4).unwrap();
        let report = theorem1_check(&TheoremConfig {
            lattice_x: l,
            lattice_y: l,
            d_emb: 2,
            d_proxy: None,
            kernel,
            seed: 6,
        })
        .unwrap();
        assert_eq!(report.dims.heads, 9);
        assert_eq!(report.dims.d_proxy, 18);
        assert!(report.max_abs_err < 1e-6, "{}", report.max_abs_err);
    }

    #[test]
    fn single_head_reduces_to_shifted_correlation() {
        // One displacement (ν, μ): Conv(x, y) = K · C(x + ν, y + μ).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kernel = KernelSpec::new(vec![([1, 0, 0], [-1, 0, 0])], vec![0.7], vec![0]).unwrap();
        let l = Lattice::line(5).unwrap();
        let fx = features(&mut rng, 5, 3);
        let fy = features(&mut rng, 5, 3);
        let c = correlation(&fx, &fy).unwrap();
        let out = conv2_bruteforce(&fx, &fy, &l, &l, &kernel).unwrap();
        for x in 0..5 {
            for y in 0..5 {
                let expect = if x + 1 < 5 && y >= 1 { 0.7 * c[(x + 1, y - 1)] } else { 0.0 };
                assert!((out[(x, y)] - expect).abs() < 1e-15);
            }
        }
        let report = theorem1_check(&TheoremConfig {
            lattice_x: l,
            lattice_y: l,
            d_emb: 3,
            d_proxy: None,
            kernel,
            seed: 7,
        })
        .unwrap();
        assert!(report.max_abs_err < 1e-12);
    }

    #[test]
    fn infeasible_proxy_dims_error() {
        let mut cfg = theorem_sweep_config(3, Some(2)).unwrap();
        cfg.d_proxy = Some(cfg.kernel.heads() * 2 - 1);
        let err = theorem1_check(&cfg).unwrap_err();
        assert!(matches!(err, Error::InfeasibleProxyDims { .. }));
    }

    #[test]
    fn memory_cap_refuses_large_runs() {
        let l = Lattice::line(32_768).unwrap();
        let f = DMatrix::zeros(1, 1);
        let err = conv2_bruteforce_capped(&f, &f, &l, &l, &KernelSpec::identity(), 8 << 30).unwrap_err();
        assert!(matches!(err, Error::MemoryCap { required, .. } if required == 32_768u64 * 32_768 * 16));
    }

    #[test]
    fn bad_head_maps_rejected() {
        let d = vec![([0; 3], [0; 3]), ([1, 0, 0], [0; 3])];
        assert!(KernelSpec::new(d.clone(), vec![1.0, 1.0], vec![0, 0]).is_err());
        assert!(KernelSpec::new(d, vec![1.0, 1.0], vec![1, 0]).is_ok());
    }
}
