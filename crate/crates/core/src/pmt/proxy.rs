use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of a match a transform is applied to; selects `w_X` or `w_Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    X,
    Y,
}

/// `N_h` proxy tensors of shape `D_proxy × D_emb` plus per-head side weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxySet {
    proxies: Vec<DMatrix<f64>>,
    w_x: Vec<f64>,
    w_y: Vec<f64>,
}

impl ProxySet {
    pub fn new(proxies: Vec<DMatrix<f64>>, w_x: Vec<f64>, w_y: Vec<f64>) -> Result<Self> {
        let first = proxies
            .first()
            .ok_or_else(|| Error::InvalidArgument("a proxy set needs at least one head".into()))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::InvalidArgument("proxy dimensions must be >= 1".into()));
        }
        if proxies.iter().any(|p| p.shape() != shape) {
            return Err(Error::DimensionMismatch("proxy heads differ in shape".into()));
        }
        if w_x.len() != proxies.len() || w_y.len() != proxies.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} heads but {} / {} side weights",
                proxies.len(),
                w_x.len(),
                w_y.len()
            )));
        }
        let finite = proxies.iter().all(|p| p.iter().all(|v| v.is_finite()))
            && w_x.iter().chain(&w_y).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("proxy set"));
        }
        Ok(Self { proxies, w_x, w_y })
    }

    pub fn heads(&self) -> usize {
        self.proxies.len()
    }

    pub fn d_proxy(&self) -> usize {
        self.proxies[0].nrows()
    }

    pub fn d_emb(&self) -> usize {
        self.proxies[0].ncols()
    }

    pub fn proxy(&self, h: usize) -> &DMatrix<f64> {
        &self.proxies[h]
    }

    pub fn proxies(&self) -> &[DMatrix<f64>] {
        &self.proxies
    }

    pub fn weights(&self, side: Side) -> &[f64] {
        match side {
            Side::X => &self.w_x,
            Side::Y => &self.w_y,
        }
    }

    pub fn with_weights(mut self, w_x: Vec<f64>, w_y: Vec<f64>) -> Result<Self> {
        if w_x.len() != self.heads() || w_y.len() != self.heads() {
            return Err(Error::DimensionMismatch("side weights must have one entry per head".into()));
        }
        self.w_x = w_x;
        self.w_y = w_y;
        Ok(self)
    }

    /// Replaces the proxy matrices, keeping the side weights.
    pub fn with_proxies(&self, proxies: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(proxies, self.w_x.clone(), self.w_y.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionScope {
    Global,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmtLayerConfig {
    pub heads: usize,
    pub d_proxy: usize,
    pub d_emb: usize,
    /// Neighbors per row for local attention.
    pub neighbors: usize,
    pub scope: AttentionScope,
}

impl PmtLayerConfig {
    pub fn new(heads: usize, d_emb: usize, d_proxy: usize, scope: AttentionScope) -> Self {
        Self {
            heads,
            d_proxy,
            d_emb,
            neighbors: 16,
            scope,
        }
    }

    /// Whether every proxy column can be mutually orthonormal.
    pub fn is_feasible(&self) -> bool {
        self.d_proxy >= self.heads * self.d_emb
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyInit {
    /// Exactly orthonormal columns across all heads; needs `D_proxy ≥ N_h·D_emb`.
    Feasible,
    /// Gaussian entries with standard deviation `1/√D_emb`.
    Practical,
}

/// Seeded proxies with side weights `1/N_h`.
pub fn init_proxies(cfg: &PmtLayerConfig, mode: ProxyInit, seed: u64) -> Result<ProxySet> {
    if cfg.heads == 0 || cfg.d_proxy == 0 || cfg.d_emb == 0 {
        return Err(Error::InvalidArgument("heads, D_proxy and D_emb must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, dp, de) = (cfg.heads, cfg.d_proxy, cfg.d_emb);
    let proxies = match mode {
        ProxyInit::Feasible => {
            if !cfg.is_feasible() {
                return Err(Error::InfeasibleProxyDims {
                    d_proxy: dp,
                    required: h * de,
                });
            }
            let raw = DMatrix::from_fn(dp, h * de, |_, _| StandardNormal.sample(&mut rng));
            let q = raw.qr().q();
            (0..h).map(|i| q.columns(i * de, de).into_owned()).collect()
        }
        ProxyInit::Practical => {
            let scale = 1.0 / (de as f64).sqrt();
            (0..h)
                .map(|_| {
                    DMatrix::from_fn(dp, de, |_, _| {
                        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                    })
                })
                .collect()
        }
    };
    let w = vec![1.0 / h as f64; h];
    ProxySet::new(proxies, w.clone(), w)
}

/// Magic bytes opening a serialized [`ProxySet`].
pub const PROXY_MAGIC: &[u8; 4] = b"PMT1";

impl ProxySet {
    /// Little-endian: magic, `u32` N_h / D_proxy / D_emb, row-major `f64`
    /// proxy blocks, then `w_X` and `w_Y`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.heads() * self.d_proxy() * self.d_emb() + 2 * self.heads()));
        out.extend_from_slice(PROXY_MAGIC);
        for v in [self.heads(), self.d_proxy(), self.d_emb()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for p in &self.proxies {
            for r in 0..p.nrows() {
                for c in 0..p.ncols() {
                    out.extend_from_slice(&p[(r, c)].to_le_bytes());
                }
            }
        }
        for w in self.w_x.iter().chain(&self.w_y) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != PROXY_MAGIC {
            return Err(Error::Parse("not a PMT1 proxy file".into()));
        }
        let header = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (h, dp, de) = (header(0), header(1), header(2));
        let expected = h
            .checked_mul(dp)
            .and_then(|v| v.checked_mul(de))
            .and_then(|v| v.checked_add(2 * h))
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(16));
        if expected != Some(bytes.len()) {
            return Err(Error::Parse(format!(
                "proxy file length {} does not match header ({h} x {dp} x {de})",
                bytes.len()
            )));
        }
        let mut values = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let proxies = (0..h)
            .map(|_| DMatrix::from_row_iterator(dp, de, values.by_ref().take(dp * de)))
            .collect();
        let w_x = values.by_ref().take(h).collect();
        let w_y = values.collect();
        Self::new(proxies, w_x, w_y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(heads: usize, d_emb: usize, d_proxy: usize) -> PmtLayerConfig {
        PmtLayerConfig::new(heads, d_emb, d_proxy, AttentionScope::Local)
    }

    #[test]
    fn feasible_blocks_are_orthonormal() {
        let p = init_proxies(&cfg(2, 4, 8), ProxyInit::Feasible, 11).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let prod = p.proxy(i).transpose() * p.proxy(j);
                let expect = if i == j {
                    DMatrix::identity(4, 4)
                } else {
                    DMatrix::zeros(4, 4)
                };
                assert!((prod - expect).abs().max() < 1e-10);
            }
        }
    }

    #[test]
    fn scalar_feasible_proxy_is_unit() {
        let p = init_proxies(&cfg(1, 1, 1), ProxyInit::Feasible, 5).unwrap();
        assert!((p.proxy(0)[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infeasible_dims_are_rejected() {
        let err = init_proxies(&cfg(4, 512, 32), ProxyInit::Feasible, 0).unwrap_err();
        assert!(err.to_string().starts_with("constraints infeasible at these dims"));
    }

    #[test]
    fn practical_table_dims_construct() {
        let p = init_proxies(&cfg(4, 512, 32), ProxyInit::Practical, 0).unwrap();
        assert_eq!((p.heads(), p.d_proxy(), p.d_emb()), (4, 32, 512));
        assert_eq!(p.weights(Side::X), &[0.25; 4]);
    }

    #[test]
    fn binary_round_trip() {
        let p = init_proxies(&cfg(3, 5, 2), ProxyInit::Practical, 9)
            .unwrap()
            .with_weights(vec![0.1, -2.0, 3.5], vec![1.0, 2.0, 3.0])
            .unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"PMT1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // Row-major: the second stored value is P0[0,1].
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), p.proxy(0)[(0, 1)]);
        assert_eq!(ProxySet::from_bytes(&bytes).unwrap(), p);
        assert!(ProxySet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
