use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use super::{knn, PointCloud, Vec3};
use crate::error::Result;

/// Neighborhood size used when parts arrive without normals.
pub const DEFAULT_NORMAL_K: usize = 16;

/// PCA normals over `k` nearest neighbors, flipped to point away from the
/// cloud centroid. Good for the closed, roughly convex parts the pipeline
/// assembles; existing normals are replaced.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let k = k.min(cloud.len());
    let table = knn(cloud, cloud, k)?;
    let points = cloud.points();
    let center = cloud.centroid();
    let normals: Vec<Vec3> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let row = table.row(i);
            let mean = row.iter().map(|&j| points[j]).sum::<Vec3>() / row.len() as f64;
            let mut cov = Matrix3::zeros();
            for &j in row {
                let d = points[j] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let smallest = eig.eigenvalues.imin();
            let mut n: Vec3 = eig.eigenvectors.column(smallest).into_owned();
            if n.norm() < 1e-12 || !n.iter().all(|c| c.is_finite()) {
                n = points[i] - center;
            }
            let n = if n.norm() > 1e-12 { n.normalize() } else { Vec3::z() };
            if n.dot(&(points[i] - center)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    PointCloud::with_normals(points.to_vec(), Some(normals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_normals_point_outward() {
        let pts: Vec<Vec3> = (0..400)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / 400.0;
                let a = i as f64 * 2.399963;
                let r = (1.0 - z * z).sqrt();
                Vec3::new(r * a.cos(), r * a.sin(), z)
            })
            .collect();
        let cloud = estimate_normals(&PointCloud::new(pts).unwrap(), DEFAULT_NORMAL_K).unwrap();
        for (p, n) in cloud.points().iter().zip(cloud.normals().unwrap()) {
            assert!(n.dot(p) > 0.98, "{p:?} {n:?}");
        }
    }

    #[test]
    fn flat_patch_gets_the_plane_normal() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(Vec3::new(i as f64, j as f64, 3.0));
            }
        }
        pts.push(Vec3::new(4.5, 4.5, 0.0));
        let cloud = estimate_normals(&PointCloud::new(pts).unwrap(), 8).unwrap();
        assert!((cloud.normals().unwrap()[0] - Vec3::z()).norm() < 1e-9);
    }
}
