//! Assembly error metrics: chamfer distance, correspondence distance, Euler
//! rotation RMSE, translation RMSE and part accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, KdTree, PointCloud, RigidTransform, Vec3};

pub const TAU_CD: f64 = 0.01;
pub const TAU_CRD: f64 = 0.1;

/// Euler and geodesic readings further apart than this are flagged.
pub const GIMBAL_FLAG_DEGREES: f64 = 1.0;

fn directed(a: &[Vec3], b: &[Vec3]) -> f64 {
    let tree = KdTree::new(b);
    a.iter().map(|p| tree.nearest_one(p).0).sum::<f64>() / a.len() as f64
}

/// Mean nearest-neighbor squared distance, summed over both directions.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    directed(a.points(), b.points()) + directed(b.points(), a.points())
}

/// Mean per-point displacement between two index-aligned clouds.
pub fn crd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "correspondence distance needs aligned clouds, got {} and {} points",
            a.len(),
            b.len()
        )));
    }
    Ok(mean_displacement(a.points(), b.points()))
}

fn mean_displacement(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Intrinsic XYZ Euler angles in radians: `R = Rx(a) · Ry(b) · Rz(c)`.
pub fn euler_xyz(r: &RigidTransform) -> [f64; 3] {
    let m = r.rotation();
    let sb = m[(0, 2)].clamp(-1.0, 1.0);
    let b = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        [(-m[(1, 2)]).atan2(m[(2, 2)]), b, (-m[(0, 1)]).atan2(m[(0, 0)])]
    } else {
        // Gimbal lock: only a ± c is determined; put it all in `a`.
        [m[(2, 1)].atan2(m[(1, 1)]), b, 0.0]
    }
}

fn wrap_degrees(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationError {
    /// `(1/√3)·‖Δe‖` over per-axis wrapped Euler differences, degrees.
    pub rmse_deg: f64,
    /// Angle of `R_gtᵀ R`, degrees.
    pub geodesic_deg: f64,
    /// Set when `rmse_deg` and `geodesic_deg / √3` disagree by more than
    /// [`GIMBAL_FLAG_DEGREES`]; happens near gimbal lock and at large errors.
    pub flagged: bool,
}

pub fn rotation_error(pred: &RigidTransform, gt: &RigidTransform) -> RotationError {
    let e_pred = euler_xyz(pred);
    let e_gt = euler_xyz(gt);
    let sq: f64 = e_pred
        .iter()
        .zip(&e_gt)
        .map(|(a, b)| wrap_degrees((a - b).to_degrees()).powi(2))
        .sum();
    let rmse_deg = (sq / 3.0).sqrt();
    let geodesic_deg = gt.rotation_distance(pred).to_degrees();
    RotationError {
        rmse_deg,
        geodesic_deg,
        flagged: (rmse_deg - geodesic_deg / 3f64.sqrt()).abs() > GIMBAL_FLAG_DEGREES,
    }
}

/// Euler-angle rotation RMSE in degrees.
pub fn rmse_rotation(pred: &RigidTransform, gt: &RigidTransform) -> f64 {
    rotation_error(pred, gt).rmse_deg
}

pub fn rmse_translation(pred: &Vec3, gt: &Vec3) -> f64 {
    (pred - gt).norm() / 3f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccuracyMode {
    Cd,
    Crd,
}

/// Percentage of parts whose posed cloud lies within the published
/// threshold of its ground-truth placement.
pub fn part_accuracy(
    parts: &[PointCloud],
    pred: &[RigidTransform],
    gt: &[RigidTransform],
    mode: AccuracyMode,
) -> Result<f64> {
    if parts.len() != pred.len() || parts.len() != gt.len() {
        return Err(Error::DimensionMismatch("parts and poses must align".into()));
    }
    if parts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = parts
        .iter()
        .zip(pred.iter().zip(gt))
        .filter(|(part, (p, g))| {
            let a = apply_transform(p, part);
            let b = apply_transform(g, part);
            match mode {
                AccuracyMode::Cd => chamfer(&a, &b) < TAU_CD,
                AccuracyMode::Crd => mean_displacement(a.points(), b.points()) < TAU_CRD,
            }
        })
        .count();
    Ok(100.0 * hits as f64 / parts.len() as f64)
}

/// Raw metric values (model units and degrees).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub cd: f64,
    pub crd: f64,
    pub rmse_r: f64,
    pub rmse_t: f64,
    pub geodesic_r: f64,
    pub gimbal_flag: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pa_cd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pa_crd: Option<f64>,
}

impl MetricBundle {
    pub const CSV_HEADER: &'static str = "crd_e-2,cd_e-3,rmse_r_deg,rmse_t_e-2,pa_crd_pct,pa_cd_pct";

    /// Scaled to the reporting units: CRD ×10², CD ×10³, RMSE(R) in
    /// degrees, RMSE(T) ×10². Part accuracies are blank when absent.
    pub fn csv_fields(&self) -> [String; 6] {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        [
            format!("{:.4}", self.crd * 1e2),
            format!("{:.4}", self.cd * 1e3),
            format!("{:.4}", self.rmse_r),
            format!("{:.4}", self.rmse_t * 1e2),
            opt(self.pa_crd),
            opt(self.pa_cd),
        ]
    }
}

/// Metrics of a predicted relative transform mapping `x` onto the fixed `y`.
pub fn pair_metrics(x: &PointCloud, y: &PointCloud, pred: &RigidTransform, gt: &RigidTransform) -> MetricBundle {
    let moved = apply_transform(pred, x);
    let truth = apply_transform(gt, x);
    let assembled = PointCloud::concat([&moved, y]).expect("nonempty clouds");
    let reference = PointCloud::concat([&truth, y]).expect("nonempty clouds");
    // Y contributes zero displacement but counts toward the mean.
    let crd = mean_displacement(moved.points(), truth.points()) * x.len() as f64 / (x.len() + y.len()) as f64;
    let rot = rotation_error(pred, gt);
    MetricBundle {
        cd: chamfer(&assembled, &reference),
        crd,
        rmse_r: rot.rmse_deg,
        rmse_t: rmse_translation(pred.translation(), gt.translation()),
        geodesic_r: rot.geodesic_deg,
        gimbal_flag: rot.flagged,
        pa_cd: None,
        pa_crd: None,
    }
}

/// Metrics over every part posed into the anchor frame. Rotation and
/// translation errors are averaged over the non-anchor parts.
pub fn multi_metrics(
    parts: &[PointCloud],
    pred: &[RigidTransform],
    gt: &[RigidTransform],
    anchor: usize,
) -> Result<MetricBundle> {
    if parts.len() != pred.len() || parts.len() != gt.len() {
        return Err(Error::DimensionMismatch("parts and poses must align".into()));
    }
    if parts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let posed: Vec<PointCloud> = parts.iter().zip(pred).map(|(p, t)| apply_transform(t, p)).collect();
    let truth: Vec<PointCloud> = parts.iter().zip(gt).map(|(p, t)| apply_transform(t, p)).collect();
    let assembled = PointCloud::concat(posed.iter())?;
    let reference = PointCloud::concat(truth.iter())?;
    let others: Vec<usize> = (0..parts.len()).filter(|&i| i != anchor).collect();
    let count = others.len().max(1) as f64;
    let rots: Vec<RotationError> = others.iter().map(|&i| rotation_error(&pred[i], &gt[i])).collect();
    Ok(MetricBundle {
        cd: chamfer(&assembled, &reference),
        crd: mean_displacement(assembled.points(), reference.points()),
        rmse_r: rots.iter().map(|r| r.rmse_deg).sum::<f64>() / count,
        rmse_t: others
            .iter()
            .map(|&i| rmse_translation(pred[i].translation(), gt[i].translation()))
            .sum::<f64>()
            / count,
        geodesic_r: rots.iter().map(|r| r.geodesic_deg).sum::<f64>() / count,
        gimbal_flag: rots.iter().any(|r| r.flagged),
        pa_cd: Some(part_accuracy(parts, pred, gt, AccuracyMode::Cd)?),
        pa_crd: Some(part_accuracy(parts, pred, gt, AccuracyMode::Crd)?),
    })
}
