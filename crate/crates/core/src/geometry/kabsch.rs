use nalgebra::{Matrix3, SVD};

use super::{RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Relative size of the second singular value below which the weighted
/// cross-covariance is treated as rank-deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Weighted least-squares rigid transform mapping `src` onto `dst`.
///
/// Minimizes `Σ w_i ‖R s_i + t − d_i‖²` with `det R = +1` (SVD with
/// reflection correction).
pub fn kabsch_weighted(src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sources, {} targets, {} weights",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let active = weights.iter().filter(|&&w| w > 0.0).count();
    let total: f64 = weights.iter().sum();
    if active < 3 || total <= 0.0 {
        return Err(Error::DegenerateCorrespondences);
    }

    let mut src_mean = Vec3::zeros();
    let mut dst_mean = Vec3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        src_mean += s * w;
        dst_mean += d * w;
    }
    src_mean /= total;
    dst_mean /= total;

    let mut cov = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        cov += (s - src_mean) * (d - dst_mean).transpose() * w;
    }
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("correspondences"));
    }

    let svd = SVD::new(cov, true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(Error::DegenerateCorrespondences);
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let v = v_t.transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // Flip the axis of the smallest singular value.
        let smallest = svd.singular_values.imin();
        correction[(smallest, smallest)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    RigidTransform::new(rotation, translation)
}
