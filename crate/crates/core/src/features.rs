//! Handcrafted, rotation-invariant point descriptors and the three-level
//! feature pyramid consumed by the matchers.
//!
//! Each descriptor row starts from a 30-value base block:
//!
//! | values | content |
//! |--------|---------|
//! | 3 | covariance eigenvalues, descending, normalized to sum 1 |
//! | 3 | linearity, planarity, sphericity |
//! | 8 | histogram of signed offsets from the tangent plane at the nearest neighbor |
//! | 8 | histogram of neighbor distances (relative to the farthest neighbor) |
//! | 8 | histogram of angles between neighbor normals and the local PCA normal |
//!
//! The signed offsets are measured along the PCA normal oriented by the
//! input normals, so they need normals and stay zero without them. Flipping
//! every normal mirrors that histogram; [`complement`] applies the mirror,
//! which turns "same surface seen from the other side" into a plain match.
//!
//! The block is repeated with fixed sign patterns up to the requested width
//! and the row is L2-normalized.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{grid_downsample, knn, NeighborTable, PointCloud, Vec3};

pub const MIN_DESCRIPTOR_DIM: usize = 16;
pub const BASE_DESCRIPTOR_LEN: usize = 30;
const OFFSET_START: usize = 6;
const DISTANCE_START: usize = 14;
const ANGLE_START: usize = 22;
/// Offsets beyond this fraction of the neighborhood radius share the end bins.
const OFFSET_RANGE: f64 = 0.5;
const HIST_BINS: usize = 8;

/// Per-point embeddings at one pyramid level (1 = coarsest).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    level: usize,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, level: usize) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { data, level })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PyramidConfig {
    /// Base voxel size `r`; levels 2 and 1 are voxelized at `2r` and `4r`.
    pub base_cell: f64,
    /// Descriptor widths for levels 1, 2, 3.
    pub dims: [usize; 3],
    /// Raw-cloud neighbors used to describe each level's points.
    pub describe_k: [usize; 3],
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            base_cell: 0.025,
            dims: [512, 256, 128],
            describe_k: [64, 40, 24],
        }
    }
}

impl PyramidConfig {
    /// Voxel size of level `n` (1-based); level 3 is the raw cloud.
    pub fn cell(&self, level: usize) -> f64 {
        self.base_cell * (1 << (3 - level)) as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_cell > 0.0 && self.base_cell.is_finite()) {
            return Err(Error::InvalidArgument("pyramid base cell must be positive".into()));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < MIN_DESCRIPTOR_DIM) {
            return Err(Error::DescriptorDimTooSmall(d));
        }
        if self.describe_k.contains(&0) {
            return Err(Error::InvalidArgument("describe_k entries must be >= 1".into()));
        }
        Ok(())
    }
}

fn sign_flip(repeat: usize, component: usize) -> f64 {
    if repeat == 0 {
        return 1.0;
    }
    let h = (repeat as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((component as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    if (h >> 61) & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

fn histogram_bin(value: f64, max: f64) -> usize {
    if max <= 0.0 {
        return 0;
    }
    ((value / max * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
}

/// The rotation-invariant base block for one neighborhood.
pub fn base_descriptor(cloud: &PointCloud, entries: &[(usize, f64)]) -> [f64; BASE_DESCRIPTOR_LEN] {
    let mut out = [0.0; BASE_DESCRIPTOR_LEN];
    let n = entries.len() as f64;
    let points = cloud.points();

    let mean = entries.iter().map(|&(j, _)| points[j]).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for &(j, _) in entries {
        let d = points[j] - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = order.map(|i| eig.eigenvalues[i].max(0.0));
    let sum: f64 = lambda.iter().sum();
    if sum > 0.0 {
        for (slot, l) in out[0..3].iter_mut().zip(lambda) {
            *slot = l / sum;
        }
    }
    if lambda[0] > 0.0 {
        out[3] = (lambda[0] - lambda[1]) / lambda[0];
        out[4] = (lambda[1] - lambda[2]) / lambda[0];
        out[5] = lambda[2] / lambda[0];
    }

    let d_max = entries.iter().map(|&(_, d)| d).fold(0.0, f64::max);
    for &(_, d) in entries {
        out[DISTANCE_START + histogram_bin(d, d_max)] += 1.0 / n;
    }

    if let Some(normals) = cloud.normals() {
        let mut pca_normal = eig.eigenvectors.column(order[2]).into_owned();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let mut facing = 0.0;
        for &(j, _) in entries {
            // |cos| makes the angle blind to normal orientation.
            let cos = normals[j].dot(&pca_normal);
            facing += cos;
            out[ANGLE_START + histogram_bin(cos.abs().min(1.0).acos(), half_pi)] += 1.0 / n;
        }
        if facing < 0.0 {
            pca_normal = -pca_normal;
        }
        // The nearest neighbor stands in for the query point.
        // It is left out of the histogram: its zero offset sits on the
        // middle bin edge and would break the mirror symmetry.
        let nearest = entries.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(k, _)| k);
        if let (Some(c), true) = (nearest, d_max > 0.0 && entries.len() > 1) {
            let center = points[entries[c].0];
            let share = 1.0 / (n - 1.0);
            for (k, &(j, _)) in entries.iter().enumerate() {
                if k == c {
                    continue;
                }
                let offset = pca_normal.dot(&(points[j] - center)) / d_max;
                let shifted = (offset / OFFSET_RANGE).clamp(-1.0, 1.0) + 1.0;
                out[OFFSET_START + histogram_bin(shifted, 2.0)] += share;
            }
        }
    }
    out
}

/// Mirrors the signed-offset histogram in every tiled copy, as if all input
/// normals had been flipped. Applying it twice is the identity.
pub fn complement(features: &FeatureMatrix) -> FeatureMatrix {
    let dim = features.dim();
    let mut data = features.data.clone();
    let full_repeats = (dim / BASE_DESCRIPTOR_LEN).max(1);
    for repeat in 0..full_repeats {
        for b in 0..HIST_BINS / 2 {
            let (c1, c2) = (OFFSET_START + b, OFFSET_START + HIST_BINS - 1 - b);
            let (s1, s2) = (repeat * BASE_DESCRIPTOR_LEN + c1, repeat * BASE_DESCRIPTOR_LEN + c2);
            if s2 >= dim {
                continue;
            }
            // Stored values carry per-slot signs; undo them before swapping.
            let (f1, f2) = (sign_flip(repeat, c1), sign_flip(repeat, c2));
            for i in 0..data.nrows() {
                let (a, b) = (data[(i, s1)] * f1, data[(i, s2)] * f2);
                data[(i, s1)] = b * f1;
                data[(i, s2)] = a * f2;
            }
        }
    }
    FeatureMatrix {
        data,
        level: features.level,
    }
}

/// Describes every row of `neighbors` (indices into `cloud`) with a
/// `dim`-wide, unit-norm, rotation-invariant descriptor.
pub fn describe(cloud: &PointCloud, neighbors: &NeighborTable, dim: usize) -> Result<FeatureMatrix> {
    if dim < MIN_DESCRIPTOR_DIM {
        return Err(Error::DescriptorDimTooSmall(dim));
    }
    if neighbors.max_index().is_some_and(|m| m >= cloud.len()) {
        return Err(Error::InvalidArgument("neighbor index out of range".into()));
    }
    let rows: Vec<Vec<f64>> = (0..neighbors.rows())
        .into_par_iter()
        .map(|i| {
            let entries: Vec<(usize, f64)> = neighbors.valid_entries(i).collect();
            let base = base_descriptor(cloud, &entries);
            let mut row = vec![0.0; dim];
            let full_repeats = (dim / BASE_DESCRIPTOR_LEN).max(1);
            for (slot, value) in row.iter_mut().enumerate() {
                let repeat = slot / BASE_DESCRIPTOR_LEN;
                if repeat >= full_repeats {
                    break;
                }
                let c = slot % BASE_DESCRIPTOR_LEN;
                *value = sign_flip(repeat, c) * base[c];
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect();
    let data = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    FeatureMatrix::new(data, 3)
}

/// One resolution of a [`Pyramid`].
#[derive(Clone, Debug)]
pub struct PyramidLevel {
    pub cloud: PointCloud,
    pub features: FeatureMatrix,
    pub cell: f64,
}

/// Three levels ordered coarse (level 1) to fine (level 3), with parent maps
/// 3 → 2 and 2 → 1. Level 3 is the input cloud itself.
#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: [PyramidLevel; 3],
    parents_fine: Vec<usize>,
    parents_mid: Vec<usize>,
}

impl Pyramid {
    pub fn from_parts(
        levels: [PyramidLevel; 3],
        parents_fine: Vec<usize>,
        parents_mid: Vec<usize>,
    ) -> Result<Self> {
        for (i, level) in levels.iter().enumerate() {
            if level.features.rows() != level.cloud.len() {
                return Err(Error::DimensionMismatch(format!(
                    "level {} has {} points but {} feature rows",
                    i + 1,
                    level.cloud.len(),
                    level.features.rows()
                )));
            }
        }
        let total = |map: &[usize], from: usize, to: usize| {
            map.len() == levels[from].cloud.len() && map.iter().all(|&p| p < levels[to].cloud.len())
        };
        if !total(&parents_fine, 2, 1) || !total(&parents_mid, 1, 0) {
            return Err(Error::DimensionMismatch("pyramid parent maps are not total".into()));
        }
        Ok(Self {
            levels,
            parents_fine,
            parents_mid,
        })
    }

    /// Level `n` in 1..=3.
    pub fn level(&self, n: usize) -> &PyramidLevel {
        &self.levels[n - 1]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.levels[i].cloud.len())
    }

    /// Level-3 → level-2 parent of every fine point.
    pub fn parents_fine(&self) -> &[usize] {
        &self.parents_fine
    }

    /// Level-2 → level-1 parent of every mid point.
    pub fn parents_mid(&self) -> &[usize] {
        &self.parents_mid
    }

    /// The same pyramid with every level's features passed through
    /// [`complement`].
    pub fn complemented(&self) -> Pyramid {
        let mut out = self.clone();
        for level in &mut out.levels {
            level.features = complement(&level.features);
        }
        out
    }

    /// Level-1 ancestor of every fine point.
    pub fn coarse_ancestors(&self) -> Vec<usize> {
        self.parents_fine.iter().map(|&p| self.parents_mid[p]).collect()
    }
}

pub fn build_pyramid(cloud: &PointCloud, cfg: &PyramidConfig) -> Result<Pyramid> {
    cfg.validate()?;
    let (mid, parents_fine) = grid_downsample(cloud, cfg.cell(2))?;
    let (coarse, parents_mid) = grid_downsample(&mid, cfg.cell(1))?;
    let level = |n: usize, points: PointCloud| -> Result<PyramidLevel> {
        let table = knn(cloud, &points, cfg.describe_k[n - 1])?;
        let features = describe(cloud, &table, cfg.dims[n - 1])?.with_level(n);
        Ok(PyramidLevel {
            cloud: points,
            features,
            cell: cfg.cell(n),
        })
    };
    Pyramid::from_parts(
        [level(1, coarse)?, level(2, mid)?, level(3, cloud.clone())?],
        parents_fine,
        parents_mid,
    )
}
