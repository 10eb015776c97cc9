//! Point clouds, neighborhoods, voxel pyramids and rigid transforms.

mod downsample;
pub mod io;
mod kabsch;
mod kdtree;
mod neighbors;
mod normals;
mod transform;

pub use downsample::grid_downsample;
pub use kabsch::kabsch_weighted;
pub use kdtree::KdTree;
pub use neighbors::{knn, knn_brute_force, NeighborTable};
pub use normals::{estimate_normals, DEFAULT_NORMAL_K};
pub use transform::{apply_transform, RigidTransform};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const NORMAL_TOLERANCE: f64 = 1e-6;

/// Sampled surface points of one part, with optional unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        Self::with_normals(points, None)
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point coordinates"));
        }
        if let Some(normals) = &normals {
            if normals.len() != points.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} normals for {} points",
                    normals.len(),
                    points.len()
                )));
            }
            if let Some(bad) = normals
                .iter()
                .position(|n| !((n.norm() - 1.0).abs() <= NORMAL_TOLERANCE))
            {
                return Err(Error::InvalidArgument(format!(
                    "normal {bad} is not unit length"
                )));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn from_slices(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed cloud; kept for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Option<Vec<Vec3>>) {
        (self.points, self.normals)
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// Sub-cloud made of the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|n| indices.iter().map(|&i| n[i]).collect());
        Self::with_normals(points, normals)
    }

    /// Concatenation of several clouds. Normals are kept only if every input has them.
    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> Result<Self> {
        let mut points = Vec::new();
        let mut normals = Some(Vec::new());
        for cloud in clouds {
            points.extend_from_slice(&cloud.points);
            match (&mut normals, &cloud.normals) {
                (Some(acc), Some(n)) => acc.extend_from_slice(n),
                _ => normals = None,
            }
        }
        Self::with_normals(points, normals)
    }
}
