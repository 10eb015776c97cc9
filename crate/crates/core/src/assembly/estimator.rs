use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kabsch_weighted, RigidTransform, Vec3};
use crate::matcher::Correspondences;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Candidate count, including the full-set fit.
    pub hypotheses: usize,
    /// Inlier radius as a fraction of the target extent.
    pub inlier_ratio: f64,
    /// Absolute inlier radius; overrides `inlier_ratio` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inlier_radius: Option<f64>,
    pub subset_fraction: f64,
    /// Also fit one candidate per coarse patch from that patch's pairs.
    pub patch_hypotheses: bool,
    /// When normals are supplied, count a pair as an inlier only if the
    /// moved source normal faces against the target normal, as on two
    /// mating fracture faces.
    pub opposing_normals: bool,
    /// Upper bound on inlier/refit alternations per candidate.
    pub refit_rounds: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            hypotheses: 64,
            inlier_ratio: 0.05,
            inlier_radius: None,
            subset_fraction: 0.6,
            patch_hypotheses: true,
            opposing_normals: true,
            refit_rounds: 20,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hypotheses == 0 {
            return Err(Error::InvalidArgument("hypotheses must be positive".into()));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::InvalidArgument("subset fraction must be within (0, 1]".into()));
        }
        if !(self.inlier_ratio > 0.0) || self.inlier_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::InvalidArgument("inlier radius must be positive".into()));
        }
        Ok(())
    }
}

/// Candidates closer than this (radians) and the inlier radius are merged.
const DUPLICATE_ANGLE: f64 = 0.035;

/// Residual cut for the final trim, in multiples of the median inlier
/// residual (about three standard deviations for Gaussian noise).
const TRIM_SIGMAS: f64 = 4.45;
const TRIM_ROUNDS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub transform: RigidTransform,
    pub inliers: usize,
    /// Fraction of correspondences within `radius` under `transform`.
    pub inlier_ratio: f64,
    pub radius: f64,
    /// Distinct polished candidates with their inlier counts, best first.
    pub candidates: Vec<(RigidTransform, usize)>,
}

fn extent(points: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Per-pair normals for the source and target sides.
#[derive(Clone, Copy, Debug)]
pub struct PairNormals<'a> {
    pub src: &'a [Vec3],
    pub dst: &'a [Vec3],
}

struct Problem<'a> {
    src: Vec<Vec3>,
    dst: Vec<Vec3>,
    weights: Vec<f64>,
    normals: Option<PairNormals<'a>>,
    radius: f64,
}

impl Problem<'_> {
    fn inlier_mask(&self, t: &RigidTransform) -> Vec<bool> {
        (0..self.src.len())
            .map(|i| {
                let close = (t.apply_point(&self.src[i]) - self.dst[i]).norm() <= self.radius;
                close
                    && self
                        .normals
                        .is_none_or(|n| t.apply_vector(&n.src[i]).dot(&n.dst[i]) < 0.0)
            })
            .collect()
    }

    fn fit(&self, mask: &[bool]) -> Result<RigidTransform> {
        fit_masked(&self.src, &self.dst, &self.weights, mask)
    }

    /// Truncated quadratic loss: inliers pay their squared residual, the
    /// rest pay the squared radius. Unlike a bare inlier count, it prefers
    /// the tight pose over a loose one that happens to catch a stray.
    fn cost(&self, t: &RigidTransform, mask: &[bool]) -> f64 {
        let cap = self.radius * self.radius;
        (0..mask.len())
            .map(|i| {
                if mask[i] {
                    (t.apply_point(&self.src[i]) - self.dst[i]).norm_squared().min(cap)
                } else {
                    cap
                }
            })
            .sum()
    }

    /// Alternates inlier selection and refitting until the inlier set is
    /// stable, keeping the lowest-cost transform seen.
    fn polish(&self, start: RigidTransform, rounds: usize) -> (RigidTransform, usize) {
        let mut mask = self.inlier_mask(&start);
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
        let mut best = (start, count(&mask), self.cost(&start, &mask));
        for _ in 0..rounds {
            let Ok(t) = self.fit(&mask) else {
                break;
            };
            let next = self.inlier_mask(&t);
            let cost = self.cost(&t, &next);
            if cost <= best.2 {
                best = (t, count(&next), cost);
            }
            if next == mask {
                break;
            }
            mask = next;
        }
        (best.0, best.1)
    }

    /// Drops inliers whose residual exceeds a few robust standard deviations
    /// and refits, so strays that fall inside the consensus radius do not
    /// bias the final pose.
    fn trim(&self, start: RigidTransform) -> RigidTransform {
        let mut t = start;
        let mut mask = self.inlier_mask(&t);
        for _ in 0..TRIM_ROUNDS {
            let residual = |i: usize| (t.apply_point(&self.src[i]) - self.dst[i]).norm();
            let mut r: Vec<f64> = (0..mask.len()).filter(|&i| mask[i]).map(residual).collect();
            if r.len() < 3 {
                break;
            }
            r.sort_by(f64::total_cmp);
            let cut = (TRIM_SIGMAS * r[r.len() / 2]).max(1e-9 * self.radius);
            let next: Vec<bool> = (0..mask.len()).map(|i| mask[i] && residual(i) <= cut).collect();
            if next == mask {
                break;
            }
            match self.fit(&next) {
                Ok(u) => t = u,
                Err(_) => break,
            }
            mask = next;
        }
        t
    }
}

fn fit_masked(src: &[Vec3], dst: &[Vec3], weights: &[f64], mask: &[bool]) -> Result<RigidTransform> {
    let w: Vec<f64> = weights.iter().zip(mask).map(|(w, &m)| if m { *w } else { 0.0 }).collect();
    kabsch_weighted(src, dst, &w)
}

/// Consensus rigid fit: the full set, random subsets and (optionally) each
/// coarse patch are fitted with weighted Kabsch. Every candidate is refitted
/// on its inliers until its inlier set stops changing, and the candidate with
/// the most inliers is returned.
///
/// Without an absolute radius the inlier radius is `inlier_ratio` times the
/// bounding-box diagonal of the target points.
pub fn estimate_transform_with(corr: &Correspondences, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate_transform_oriented(corr, None, cfg)
}

/// [`estimate_transform_with`] with optional per-pair normals, used for the
/// opposing-normal inlier test.
pub fn estimate_transform_oriented(
    corr: &Correspondences,
    normals: Option<PairNormals<'_>>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    if corr.len() < 3 {
        return Err(Error::DegenerateCorrespondences.context(format!("{} correspondences", corr.len())));
    }
    let n = corr.len();
    if normals.is_some_and(|nm| nm.src.len() != n || nm.dst.len() != n) {
        return Err(Error::DimensionMismatch("normals must align with correspondences".into()));
    }
    let dst = corr.dst_points();
    let problem = Problem {
        src: corr.src_points(),
        radius: cfg.inlier_radius.unwrap_or(cfg.inlier_ratio * extent(&dst)),
        dst,
        weights: corr.weights(),
        normals: normals.filter(|_| cfg.opposing_normals),
    };

    let subset = ((n as f64 * cfg.subset_fraction).round() as usize).clamp(3, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut masks: Vec<Vec<bool>> = (1..cfg.hypotheses)
        .map(|_| {
            let mut mask = vec![false; n];
            for i in sample(&mut rng, n, subset) {
                mask[i] = true;
            }
            mask
        })
        .collect();
    if cfg.patch_hypotheses {
        let mut patches: Vec<usize> = corr.pairs.iter().map(|c| c.patch).collect();
        patches.sort_unstable();
        patches.dedup();
        for p in patches {
            let mask: Vec<bool> = corr.pairs.iter().map(|c| c.patch == p).collect();
            if mask.iter().filter(|&&b| b).count() >= 3 {
                masks.push(mask);
            }
        }
    }

    let full = problem.fit(&vec![true; n]).map_err(|e| e.context("full-set fit"))?;
    let candidates: Vec<Option<RigidTransform>> = masks.par_iter().map(|m| problem.fit(m).ok()).collect();
    let polished: Vec<(RigidTransform, usize)> = std::iter::once(Some(full))
        .chain(candidates)
        .flatten()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|t| problem.polish(t, cfg.refit_rounds))
        .collect();
    // Stable sort: earliest candidate wins ties, so the full-set fit is preferred.
    let mut order: Vec<usize> = (0..polished.len()).collect();
    order.sort_by(|&a, &b| polished[b].1.cmp(&polished[a].1));
    let mut candidates: Vec<(RigidTransform, usize)> = Vec::new();
    for i in order {
        let (t, c) = polished[i];
        let seen = candidates.iter().any(|(u, _)| {
            u.rotation_distance(&t) < DUPLICATE_ANGLE && (u.translation() - t.translation()).norm() < problem.radius
        });
        if !seen {
            candidates.push((t, c));
        }
    }
    let best = problem.trim(candidates[0].0);
    let inliers = problem.inlier_mask(&best).iter().filter(|&&b| b).count();
    Ok(Estimate {
        transform: best,
        inliers,
        inlier_ratio: inliers as f64 / n as f64,
        radius: problem.radius,
        candidates,
    })
}

/// [`estimate_transform_with`] at default settings with the given
/// hypothesis count.
pub fn estimate_transform(corr: &Correspondences, hypotheses: usize) -> Result<RigidTransform> {
    let cfg = EstimatorConfig {
        hypotheses,
        ..EstimatorConfig::default()
    };
    estimate_transform_with(corr, &cfg).map(|e| e.transform)
}
