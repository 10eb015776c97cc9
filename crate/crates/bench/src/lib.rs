//! Seeded inputs for the kernel benchmarks in `benches/`.

use nalgebra::DMatrix;
use pmtr_core::geometry::knn;
use pmtr_core::hdc::{KernelSpec, Lattice};
use pmtr_core::pmt::{build_attention, init_proxies, AttentionScope, PmtLayerConfig, ProxyInit, ProxySet, SparseAttention};
use pmtr_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const D_EMB: usize = 32;
pub const HEADS: usize = 4;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// One local PMT layer on an `n`-point line: features, attention, proxies.
pub struct PmtFixture {
    pub features: DMatrix<f64>,
    pub attention: SparseAttention,
    pub proxies: ProxySet,
}

pub fn pmt_fixture(n: usize, k: usize) -> Result<PmtFixture> {
    let cloud = Lattice::line(n)?.to_cloud();
    let bandwidths: Vec<f64> = (1..=HEADS).map(|h| h as f64 * 2.0).collect();
    let attention = build_attention(&knn(&cloud, &cloud, k.min(n))?, &bandwidths)?;
    let layer = PmtLayerConfig::new(HEADS, D_EMB, D_EMB, AttentionScope::Local);
    Ok(PmtFixture {
        features: random_matrix(n, D_EMB, n as u64),
        attention,
        proxies: init_proxies(&layer, ProxyInit::Practical, 1)?,
    })
}

/// Two `n`-point line lattices with features and a 3×3 line kernel.
pub struct ConvFixture {
    pub lattice: Lattice,
    pub fx: DMatrix<f64>,
    pub fy: DMatrix<f64>,
    pub kernel: KernelSpec,
}

pub fn conv_fixture(n: usize) -> Result<ConvFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    Ok(ConvFixture {
        lattice: Lattice::line(n)?,
        fx: random_matrix(n, D_EMB, 2 * n as u64),
        fy: random_matrix(n, D_EMB, 2 * n as u64 + 1),
        kernel: KernelSpec::random_line(3, 3, &mut rng)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_matching_shapes() {
        let p = pmt_fixture(64, 8).unwrap();
        assert_eq!(p.features.shape(), (64, D_EMB));
        assert_eq!(p.proxies.d_emb(), D_EMB);
        let c = conv_fixture(16).unwrap();
        assert_eq!(c.lattice.len(), 16);
        assert_eq!(c.kernel.heads(), 9);
    }
}
