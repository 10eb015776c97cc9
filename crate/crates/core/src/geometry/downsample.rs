use std::collections::HashMap;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

fn voxel_key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Voxel-grid downsampling: one centroid per occupied cell.
///
/// Returns the downsampled cloud and, for every input point, the index of its
/// representative. Cells are numbered in order of first occurrence.
pub fn grid_downsample(cloud: &PointCloud, cell: f64) -> Result<(PointCloud, Vec<usize>)> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "voxel cell size must be positive, got {cell}"
        )));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut sums: Vec<Vec3> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut parents = Vec::with_capacity(cloud.len());
    for p in cloud.points() {
        let slot = *slots.entry(voxel_key(p, cell)).or_insert_with(|| {
            sums.push(Vec3::zeros());
            counts.push(0);
            sums.len() - 1
        });
        sums[slot] += p;
        counts[slot] += 1;
        parents.push(slot);
    }
    let centroids = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s / c as f64)
        .collect();
    Ok((PointCloud::new(centroids)?, parents))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_kept() {
        let cloud = PointCloud::from_slices(&[[0.3, -0.2, 0.9]]).unwrap();
        let (down, parents) = grid_downsample(&cloud, 0.7).unwrap();
        assert_eq!(down.points(), cloud.points());
        assert_eq!(parents, vec![0]);
    }

    #[test]
    fn co_cell_points_collapse_to_centroid() {
        let cloud = PointCloud::from_slices(&[[0.1, 0.1, 0.1], [0.3, 0.5, 0.7]]).unwrap();
        let (down, parents) = grid_downsample(&cloud, 1.0).unwrap();
        assert_eq!(down.len(), 1);
        assert!((down.point(0) - Vec3::new(0.2, 0.3, 0.4)).norm() < 1e-15);
        assert_eq!(parents, vec![0, 0]);
    }

    #[test]
    fn lattice_count_matches_occupied_voxels() {
        // 10 lattice planes per axis, two per cell -> 5^3 occupied cells.
        let pts: Vec<[f64; 3]> = (0..10)
            .flat_map(|i| {
                (0..10).flat_map(move |j| (0..10).map(move |k| [i as f64, j as f64, k as f64]))
            })
            .collect();
        let cloud = PointCloud::from_slices(&pts).unwrap();
        let (down, parents) = grid_downsample(&cloud, 2.0).unwrap();
        assert_eq!(down.len(), 125);
        assert!(parents.iter().all(|&p| p < 125));
    }

    #[test]
    fn non_positive_cell_is_rejected() {
        let cloud = PointCloud::from_slices(&[[0.0; 3]]).unwrap();
        assert!(grid_downsample(&cloud, 0.0).is_err());
        assert!(grid_downsample(&cloud, -1.0).is_err());
    }
}
