//! Coarse-to-fine correspondence search.
//!
//! 1. Level-1 features pass through a two-layer PMT stack with global
//!    attention and are scored with `exp(−‖a − b‖²)`; the top-k pairs become
//!    coarse matches.
//! 2. Level-2 and level-3 features pass through local-attention stacks and
//!    are fused into one fine feature per input point.
//! 3. Each coarse match pairs the fine points grouped under its two nodes;
//!    the patch score matrix is solved with dustbin Sinkhorn and pairs above
//!    chance mass are kept.

mod coarse;
mod sinkhorn;

pub use coarse::{coarse_scores, compose_parents, group_point_to_node, topk_matches, CoarseMatch};
pub use sinkhorn::{marginal_violation, sinkhorn_ot};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_pyramid, Pyramid, PyramidConfig};
use crate::geometry::{knn, PointCloud, Vec3};
use crate::pmt::{
    build_attention, fit_proxies, init_proxies, pmt_stack, AttentionScope, PmtLayerConfig, ProxyInit, ProxySet,
    Side, SparseAttention, StackLayer,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Coarse matches kept.
    pub k: usize,
    pub sinkhorn_iters: usize,
    pub temperature: f64,
    /// Constant dustbin score.
    pub dustbin: f64,
    /// Neighbors per row for local attention.
    pub neighbors: usize,
    pub heads: usize,
    /// Per-head attention bandwidths as multiples of the level's cell size.
    pub bandwidth_scales: Vec<f64>,
    /// `[first, second]` layer output widths for levels 1, 2, 3.
    pub proxy_dims: [[usize; 2]; 3],
    /// Gradient steps applied to proxies that cannot be exactly orthonormal.
    pub proxy_fit_steps: usize,
    pub pyramid: PyramidConfig,
    /// Match X against the complemented descriptors of Y, so surfaces that
    /// face each other (mating fracture faces) score as equal.
    pub complementary: bool,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            k: 128,
            sinkhorn_iters: 100,
            temperature: 0.1,
            dustbin: 1.0,
            neighbors: 16,
            heads: 4,
            bandwidth_scales: vec![0.5, 1.0, 2.0, 4.0],
            proxy_dims: [[32, 128], [16, 64], [8, 32]],
            proxy_fit_steps: 50,
            pyramid: PyramidConfig::default(),
            complementary: false,
            seed: 0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if self.sinkhorn_iters == 0 {
            return Err(Error::InvalidArgument("sinkhorn iterations must be >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if self.heads == 0 || self.bandwidth_scales.len() != self.heads {
            return Err(Error::InvalidArgument("one bandwidth scale per head is required".into()));
        }
        if self.neighbors == 0 {
            return Err(Error::InvalidArgument("neighbors must be >= 1".into()));
        }
        Ok(())
    }

    fn bandwidths(&self, cell: f64) -> Vec<f64> {
        self.bandwidth_scales.iter().map(|s| s * cell).collect()
    }
}

/// Proxy tensors for the two layers of each level's stack.
#[derive(Clone, Debug, PartialEq)]
pub struct MatcherModel {
    levels: [[ProxySet; 2]; 3],
}

impl MatcherModel {
    /// Seeded proxies for `cfg`. Layers whose dims allow it get exactly
    /// orthonormal proxies; the rest start random and are fitted toward the
    /// constraints for `cfg.proxy_fit_steps` steps.
    pub fn new(cfg: &MatchConfig) -> Result<Self> {
        cfg.validate()?;
        let make = |level: usize, layer: usize| -> Result<ProxySet> {
            let d_emb = if layer == 0 {
                cfg.pyramid.dims[level]
            } else {
                cfg.proxy_dims[level][0]
            };
            let d_proxy = cfg.proxy_dims[level][layer];
            let scope = if level == 0 {
                AttentionScope::Global
            } else {
                AttentionScope::Local
            };
            let layer_cfg = PmtLayerConfig::new(cfg.heads, d_emb, d_proxy, scope);
            let seed = cfg.seed.wrapping_mul(31).wrapping_add((level * 2 + layer) as u64);
            if layer_cfg.is_feasible() {
                init_proxies(&layer_cfg, ProxyInit::Feasible, seed)
            } else {
                let p = init_proxies(&layer_cfg, ProxyInit::Practical, seed)?;
                if cfg.proxy_fit_steps == 0 {
                    return Ok(p);
                }
                Ok(fit_proxies(&p, cfg.proxy_fit_steps, 0.05)?.proxies)
            }
        };
        Ok(Self {
            levels: [
                [make(0, 0)?, make(0, 1)?],
                [make(1, 0)?, make(1, 1)?],
                [make(2, 0)?, make(2, 1)?],
            ],
        })
    }

    pub fn from_levels(levels: [[ProxySet; 2]; 3]) -> Result<Self> {
        for (i, pair) in levels.iter().enumerate() {
            if pair[0].d_proxy() != pair[1].d_emb() {
                return Err(Error::DimensionMismatch(format!("level {} proxies do not chain", i + 1)));
            }
        }
        Ok(Self { levels })
    }

    /// Proxies of level `n` in 1..=3.
    pub fn level(&self, n: usize) -> &[ProxySet; 2] {
        &self.levels[n - 1]
    }
}

/// Refined features of one side, ready to be matched.
#[derive(Clone, Debug)]
pub struct RefinedFeatures {
    /// Level-3 points (the input cloud).
    pub fine_points: Vec<Vec3>,
    /// Unit-norm coarse rows.
    pub coarse: DMatrix<f64>,
    /// Unit-norm fine rows, one per fine point.
    pub fine: DMatrix<f64>,
    /// Coarse ancestor of each fine point.
    pub ancestors: Vec<usize>,
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

fn run_stack(
    pyr: &Pyramid,
    level: usize,
    proxies: &[ProxySet; 2],
    cfg: &MatchConfig,
    side: Side,
) -> Result<DMatrix<f64>> {
    let lv = pyr.level(level);
    let k = if level == 1 { lv.cloud.len() } else { cfg.neighbors };
    let attention: SparseAttention = build_attention(&knn(&lv.cloud, &lv.cloud, k)?, &cfg.bandwidths(lv.cell))?;
    let layers = [
        StackLayer {
            attention: &attention,
            proxies: &proxies[0],
        },
        StackLayer {
            attention: &attention,
            proxies: &proxies[1],
        },
    ];
    let mut out = pmt_stack(&lv.features, &layers, side)?.into_inner();
    normalize_rows(&mut out);
    Ok(out)
}

/// Runs the three PMT stacks on one side.
pub fn refine(pyr: &Pyramid, model: &MatcherModel, cfg: &MatchConfig, side: Side) -> Result<RefinedFeatures> {
    let coarse = run_stack(pyr, 1, model.level(1), cfg, side)?;
    let mid = run_stack(pyr, 2, model.level(2), cfg, side)?;
    let fine_own = run_stack(pyr, 3, model.level(3), cfg, side)?;
    let parents = pyr.parents_fine();
    let (n, a, b) = (fine_own.nrows(), fine_own.ncols(), mid.ncols());
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let fine = DMatrix::from_fn(n, a + b, |i, j| {
        if j < a {
            fine_own[(i, j)] * scale
        } else {
            mid[(parents[i], j - a)] * scale
        }
    });
    Ok(RefinedFeatures {
        fine_points: pyr.level(3).cloud.points().to_vec(),
        coarse,
        fine,
        ancestors: pyr.coarse_ancestors(),
    })
}

/// One matched pair of input points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src_index: usize,
    pub dst_index: usize,
    pub src: [f64; 3],
    pub dst: [f64; 3],
    pub w: f64,
    /// Index of the coarse match whose patch produced this pair.
    pub patch: usize,
}

impl Correspondence {
    pub fn src_point(&self) -> Vec3 {
        Vec3::from(self.src)
    }

    pub fn dst_point(&self) -> Vec3 {
        Vec3::from(self.dst)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchMetadata {
    pub config_hash: String,
    pub level_sizes_x: [usize; 3],
    pub level_sizes_y: [usize; 3],
    pub coarse_matches: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Correspondences {
    pub pairs: Vec<Correspondence>,
    pub metadata: MatchMetadata,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn src_points(&self) -> Vec<Vec3> {
        self.pairs.iter().map(Correspondence::src_point).collect()
    }

    pub fn dst_points(&self) -> Vec<Vec3> {
        self.pairs.iter().map(Correspondence::dst_point).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.pairs.iter().map(|c| c.w).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("correspondences serialize")
    }
}

/// FNV-1a over a config's JSON form; stable across runs and platforms.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let hash = json
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3));
    format!("{hash:016x}")
}

/// Matches two sets of refined features. Fails with [`Error::NoMatch`] when
/// nothing clears the extraction threshold.
pub fn match_refined(x: &RefinedFeatures, y: &RefinedFeatures, cfg: &MatchConfig) -> Result<Correspondences> {
    cfg.validate()?;
    let scores = coarse_scores(&x.coarse, &y.coarse)?;
    let coarse = topk_matches(&scores, cfg.k);
    let groups_x = group_point_to_node(&x.ancestors, x.coarse.nrows())?;
    let groups_y = group_point_to_node(&y.ancestors, y.coarse.nrows())?;

    let per_match: Vec<Vec<(usize, usize, f64, usize)>> = coarse
        .par_iter()
        .enumerate()
        .map(|(patch_index, cm)| -> Result<Vec<(usize, usize, f64, usize)>> {
            let rows = &groups_x[cm.x];
            let cols = &groups_y[cm.y];
            if rows.is_empty() || cols.is_empty() {
                return Ok(Vec::new());
            }
            let fx = x.fine.select_rows(rows.iter());
            let fy = y.fine.select_rows(cols.iter());
            let patch = coarse_scores(&fx, &fy)?;
            let plan = sinkhorn_ot(&patch, cfg.dustbin, cfg.temperature, cfg.sinkhorn_iters)?;
            let (m, n) = (rows.len(), cols.len());
            let threshold = 1.0 / (m + n) as f64;
            let mut out = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    let mass = plan[(i, j)];
                    if mass > threshold {
                        out.push((rows[i], cols[j], mass.min(1.0), patch_index));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    // Keep the heaviest pair per source point; earlier matches win ties.
    let mut best: Vec<Option<(usize, f64, usize)>> = vec![None; x.fine_points.len()];
    for (src, dst, w, patch) in per_match.into_iter().flatten() {
        match best[src] {
            Some((_, bw, _)) if bw >= w => {}
            _ => best[src] = Some((dst, w, patch)),
        }
    }
    let pairs: Vec<Correspondence> = best
        .iter()
        .enumerate()
        .filter_map(|(src, b)| {
            b.map(|(dst, w, patch)| Correspondence {
                src_index: src,
                dst_index: dst,
                src: x.fine_points[src].into(),
                dst: y.fine_points[dst].into(),
                w,
                patch,
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoMatch);
    }
    Ok(Correspondences {
        pairs,
        metadata: MatchMetadata {
            config_hash: config_hash(cfg),
            coarse_matches: coarse.len(),
            ..MatchMetadata::default()
        },
    })
}

/// Matches two prebuilt pyramids.
pub fn match_pyramids(px: &Pyramid, py: &Pyramid, model: &MatcherModel, cfg: &MatchConfig) -> Result<Correspondences> {
    let rx = refine(px, model, cfg, Side::X)?;
    let ry = if cfg.complementary {
        refine(&py.complemented(), model, cfg, Side::Y)?
    } else {
        refine(py, model, cfg, Side::Y)?
    };
    let mut out = match_refined(&rx, &ry, cfg)?;
    out.metadata.level_sizes_x = px.sizes();
    out.metadata.level_sizes_y = py.sizes();
    Ok(out)
}

/// Full matching pipeline from raw clouds.
pub fn match_pair(x: &PointCloud, y: &PointCloud, model: &MatcherModel, cfg: &MatchConfig) -> Result<Correspondences> {
    let px = build_pyramid(x, &cfg.pyramid)?;
    let py = build_pyramid(y, &cfg.pyramid)?;
    match_pyramids(&px, &py, model, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refined(points: usize, coarse: DMatrix<f64>, fine: DMatrix<f64>) -> RefinedFeatures {
        RefinedFeatures {
            fine_points: (0..points).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
            coarse,
            fine,
            ancestors: vec![0; points],
        }
    }

    #[test]
    fn disjoint_descriptors_do_not_match() {
        let x = refined(4, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::from_fn(4, 2, |_, j| if j == 0 { 1.0 } else { 0.0 }));
        let y = refined(4, DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]), DMatrix::from_fn(4, 2, |_, j| if j == 0 { -1.0 } else { 0.0 }));
        assert!(matches!(match_refined(&x, &y, &MatchConfig::default()), Err(Error::NoMatch)));
    }

    #[test]
    fn distinct_identical_rows_pair_up() {
        let fine = DMatrix::<f64>::identity(4, 4);
        let x = refined(4, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), fine.clone());
        let y = refined(4, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), fine);
        let corr = match_refined(&x, &y, &MatchConfig::default()).unwrap();
        assert_eq!(corr.len(), 4);
        assert!(corr.pairs.iter().all(|c| c.src_index == c.dst_index && c.w > 0.0 && c.w <= 1.0));
    }

    #[test]
    fn config_hash_is_stable() {
        let a = config_hash(&MatchConfig::default());
        assert_eq!(a, config_hash(&MatchConfig::default()));
        let other = MatchConfig {
            k: 64,
            ..MatchConfig::default()
        };
        assert_ne!(a, config_hash(&other));
    }
}
