use nalgebra::{Matrix6, UnitQuaternion, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud, RigidTransform, Vec3};

/// Geometric verification of pose candidates: each one is tightened with
/// point-to-plane ICP over the full clouds and scored by surface contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub enabled: bool,
    /// Number of estimator candidates to verify, best first.
    pub candidates: usize,
    /// ICP iterations per matching radius.
    pub iterations: usize,
    /// Matching radii in units of the target's mean point spacing, coarse
    /// to fine.
    pub radii: Vec<f64>,
    /// A source point is in contact when its nearest target point lies
    /// within `contact_distance` spacings and its point-to-plane residual
    /// is below `contact_tolerance` spacings, with opposing normals.
    pub contact_distance: f64,
    pub contact_tolerance: f64,
    /// Each refined candidate is also restarted from this many evenly
    /// spaced rotations about the mean normal of its contact region.
    pub sweep: usize,
    /// Approximate source size used during the candidate search.
    pub search_points: usize,
    /// Poses refined and scored at full resolution.
    pub finalists: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            candidates: 16,
            iterations: 10,
            radii: vec![4.0, 2.0, 1.0],
            contact_distance: 1.5,
            contact_tolerance: 0.2,
            sweep: 12,
            search_points: 500,
            finalists: 3,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enabled && self.candidates == 0 {
            return Err(Error::InvalidArgument("refine candidates must be positive".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.radii.iter().copied().all(positive)
            || !positive(self.contact_distance)
            || !positive(self.contact_tolerance)
        {
            return Err(Error::InvalidArgument("refine radii and tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Target cloud prepared for repeated nearest-neighbor queries.
pub(crate) struct Surface<'a> {
    points: &'a [Vec3],
    normals: &'a [Vec3],
    tree: KdTree<'a>,
    pub spacing: f64,
}

impl<'a> Surface<'a> {
    pub fn new(cloud: &'a PointCloud, normals: &'a [Vec3]) -> Self {
        let points = cloud.points();
        let tree = KdTree::new(points);
        let spacing = if points.len() < 2 {
            0.0
        } else {
            points.iter().map(|p| tree.nearest(p, 2)[1].0.sqrt()).sum::<f64>() / points.len() as f64
        };
        Self {
            points,
            normals,
            tree,
            spacing,
        }
    }

    /// Nearest target point with an opposing normal within `radius`.
    fn partner(&self, p: &Vec3, n: &Vec3, radius: f64) -> Option<usize> {
        let (d2, j) = self.tree.nearest_one(p);
        (d2 <= radius * radius && n.dot(&self.normals[j]) < 0.0).then_some(j)
    }

    pub fn contact(&self, src: &[Vec3], src_normals: &[Vec3], t: &RigidTransform, cfg: &RefineConfig) -> usize {
        let radius = cfg.contact_distance * self.spacing;
        let tol = cfg.contact_tolerance * self.spacing;
        src.iter()
            .zip(src_normals)
            .filter(|(p, n)| {
                let p = t.apply_point(p);
                self.partner(&p, &t.apply_vector(n), radius)
                    .is_some_and(|j| self.normals[j].dot(&(p - self.points[j])).abs() <= tol)
            })
            .count()
    }

    /// Centroid and mean target normal of the loosely matched region.
    fn contact_frame(&self, src: &[Vec3], src_normals: &[Vec3], t: &RigidTransform, radius: f64) -> Option<(Vec3, Vec3)> {
        let mut center = Vec3::zeros();
        let mut normal = Vec3::zeros();
        let mut count = 0usize;
        for (x, nx) in src.iter().zip(src_normals) {
            if let Some(j) = self.partner(&t.apply_point(x), &t.apply_vector(nx), radius) {
                center += self.points[j];
                normal += self.normals[j];
                count += 1;
            }
        }
        let norm = normal.norm();
        (count >= 3 && norm > 1e-9).then(|| (center / count as f64, normal / norm))
    }

    /// Point-to-plane ICP from `start`.
    pub fn icp(&self, src: &[Vec3], src_normals: &[Vec3], start: RigidTransform, cfg: &RefineConfig) -> RigidTransform {
        let mut t = start;
        for &r in &cfg.radii {
            let radius = r * self.spacing;
            for _ in 0..cfg.iterations {
                let mut a = Matrix6::<f64>::zeros();
                let mut b = Vector6::<f64>::zeros();
                let mut used = 0;
                for (x, nx) in src.iter().zip(src_normals) {
                    let p = t.apply_point(x);
                    let Some(j) = self.partner(&p, &t.apply_vector(nx), radius) else {
                        continue;
                    };
                    let n = self.normals[j];
                    let jac = Vector6::from_iterator(p.cross(&n).iter().chain(n.iter()).copied());
                    let res = n.dot(&(p - self.points[j]));
                    a += jac * jac.transpose();
                    b -= jac * res;
                    used += 1;
                }
                if used < 6 {
                    break;
                }
                a += Matrix6::identity() * 1e-9 * a.trace();
                let Some(step) = a.cholesky().map(|c| c.solve(&b)) else {
                    break;
                };
                let omega = Vec3::new(step[0], step[1], step[2]);
                let delta = Vec3::new(step[3], step[4], step[5]);
                let inc = RigidTransform::from_quaternion(UnitQuaternion::from_scaled_axis(omega), delta);
                t = inc.compose(&t).renormalized();
                if omega.norm() < 1e-7 && delta.norm() < 1e-7 * self.spacing.max(1e-12) {
                    break;
                }
            }
        }
        t
    }
}

/// Refines the leading candidates and returns the one with the most contact
/// points, together with that count. The search runs on a strided subset of
/// the source; only the `finalists` best poses are refined at full
/// resolution. Earlier candidates win ties.
pub(crate) fn verify(
    x: &PointCloud,
    nx: &[Vec3],
    surface: &Surface<'_>,
    candidates: &[(RigidTransform, usize)],
    cfg: &RefineConfig,
) -> Option<(RigidTransform, usize)> {
    let stride = x.len().div_ceil(cfg.search_points.max(1)).max(1);
    let src: Vec<Vec3> = x.points().iter().step_by(stride).copied().collect();
    let src_n: Vec<Vec3> = nx.iter().step_by(stride).copied().collect();
    let radius = cfg.radii.iter().copied().fold(cfg.contact_distance, f64::max) * surface.spacing;
    let refined: Vec<RigidTransform> = candidates
        .par_iter()
        .take(cfg.candidates)
        .map(|(t, _)| surface.icp(&src, &src_n, *t, cfg))
        .collect();
    let seeds = distinct(refined, surface.spacing);
    let mut scored: Vec<(RigidTransform, usize)> = seeds
        .par_iter()
        .flat_map_iter(|t| {
            let mut out = vec![(*t, surface.contact(&src, &src_n, t, cfg))];
            if let Some((center, axis)) = surface.contact_frame(&src, &src_n, t, radius) {
                for k in 1..cfg.sweep {
                    let angle = 2.0 * std::f64::consts::PI * k as f64 / cfg.sweep as f64;
                    let spin = RigidTransform::from_axis_angle(axis, angle, Vec3::zeros());
                    let about = RigidTransform::from_translation(center)
                        .compose(&spin)
                        .compose(&RigidTransform::from_translation(-center));
                    let u = surface.icp(&src, &src_n, about.compose(t), cfg);
                    out.push((u, surface.contact(&src, &src_n, &u, cfg)));
                }
            }
            out
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1));
    let finalists = distinct(scored.into_iter().map(|(t, _)| t).collect(), surface.spacing);
    finalists
        .par_iter()
        .take(cfg.finalists.max(1))
        .map(|t| {
            let t = surface.icp(x.points(), nx, *t, cfg);
            (t, surface.contact(x.points(), nx, &t, cfg))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None, |acc: Option<(RigidTransform, usize)>, c| match acc {
            Some(a) if a.1 >= c.1 => Some(a),
            _ => Some(c),
        })
}

/// Drops poses within one degree and one point spacing of an earlier one.
fn distinct(poses: Vec<RigidTransform>, spacing: f64) -> Vec<RigidTransform> {
    let mut out: Vec<RigidTransform> = Vec::new();
    for t in poses {
        if !out
            .iter()
            .any(|u| u.rotation_distance(&t) < 1f64.to_radians() && (u.translation() - t.translation()).norm() < spacing)
        {
            out.push(t);
        }
    }
    out
}

/// Number of source points in contact with the target under `t`, or `None`
/// when either cloud lacks normals.
pub fn contact_points(x: &PointCloud, y: &PointCloud, t: &RigidTransform, cfg: &RefineConfig) -> Option<usize> {
    let (nx, ny) = (x.normals()?, y.normals()?);
    Some(Surface::new(y, ny).contact(x.points(), nx, t, cfg))
}

/// Point-to-plane ICP of `x` onto `y` from `start`, or `None` when either
/// cloud lacks normals.
pub fn icp_refine(x: &PointCloud, y: &PointCloud, start: &RigidTransform, cfg: &RefineConfig) -> Option<RigidTransform> {
    let (nx, ny) = (x.normals()?, y.normals()?);
    Some(Surface::new(y, ny).icp(x.points(), nx, *start, cfg))
}
