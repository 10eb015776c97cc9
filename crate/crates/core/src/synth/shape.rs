use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Closed, star-shaped solids centered at the origin, each described by a
/// degree-1 homogeneous gauge `g` with `g < 1` inside and `g = 1` on the
/// surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BaseShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Ellipsoid { radii: [f64; 3] },
    Superquadric { radii: [f64; 3], e1: f64, e2: f64 },
}

impl Default for BaseShape {
    fn default() -> Self {
        BaseShape::Sphere { radius: 0.5 }
    }
}

impl BaseShape {
    pub fn box_default() -> Self {
        BaseShape::Box {
            half_extents: [0.45, 0.35, 0.3],
        }
    }

    pub fn ellipsoid_default() -> Self {
        BaseShape::Ellipsoid {
            radii: [0.5, 0.38, 0.3],
        }
    }

    pub fn superquadric_default() -> Self {
        BaseShape::Superquadric {
            radii: [0.45, 0.38, 0.32],
            e1: 0.5,
            e2: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        let ok = match self {
            BaseShape::Sphere { radius } => positive(&[*radius]),
            BaseShape::Box { half_extents } => positive(half_extents),
            BaseShape::Ellipsoid { radii } => positive(radii),
            BaseShape::Superquadric { radii, e1, e2 } => {
                positive(radii) && positive(&[*e1, *e2]) && *e1 <= 2.0 && *e2 <= 2.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid shape parameters: {self:?}"))
        }
    }

    pub fn gauge(&self, p: &Vec3) -> f64 {
        match self {
            BaseShape::Sphere { radius } => p.norm() / radius,
            BaseShape::Box { half_extents: h } => (p.x.abs() / h[0]).max(p.y.abs() / h[1]).max(p.z.abs() / h[2]),
            BaseShape::Ellipsoid { radii: r } => Vec3::new(p.x / r[0], p.y / r[1], p.z / r[2]).norm(),
            BaseShape::Superquadric { radii: r, e1, e2 } => {
                let a = (p.x / r[0]).abs().powf(2.0 / e2) + (p.y / r[1]).abs().powf(2.0 / e2);
                let f = a.powf(e2 / e1) + (p.z / r[2]).abs().powf(2.0 / e1);
                f.powf(e1 / 2.0)
            }
        }
    }

    /// Outward unit normal at a surface point.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        let g = match self {
            BaseShape::Sphere { .. } => *p,
            BaseShape::Box { half_extents: h } => {
                let s = [p.x.abs() / h[0], p.y.abs() / h[1], p.z.abs() / h[2]];
                let k = (0..3).fold(0, |best, i| if s[i] > s[best] { i } else { best });
                let mut n = Vec3::zeros();
                n[k] = p[k].signum();
                n
            }
            BaseShape::Ellipsoid { radii: r } => Vec3::new(p.x / (r[0] * r[0]), p.y / (r[1] * r[1]), p.z / (r[2] * r[2])),
            BaseShape::Superquadric { radii: r, e1, e2 } => {
                let (qx, qy, qz) = ((p.x / r[0]).abs(), (p.y / r[1]).abs(), (p.z / r[2]).abs());
                let a = qx.powf(2.0 / e2) + qy.powf(2.0 / e2);
                let outer = if a > 0.0 { a.powf(e2 / e1 - 1.0) } else { 0.0 };
                Vec3::new(
                    outer * qx.powf(2.0 / e2 - 1.0) * p.x.signum() / r[0],
                    outer * qy.powf(2.0 / e2 - 1.0) * p.y.signum() / r[1],
                    qz.powf(2.0 / e1 - 1.0) * p.z.signum() / r[2],
                )
            }
        };
        g.normalize()
    }

    /// Surface point in direction `d` (unit) from the center.
    pub fn radial_point(&self, d: &Vec3) -> Vec3 {
        d / self.gauge(d)
    }

    /// Surface area per unit solid angle at direction `d`.
    pub fn area_density(&self, d: &Vec3) -> f64 {
        let p = self.radial_point(d);
        let n = self.normal(&p);
        p.norm_squared() / n.dot(d).abs().max(1e-9)
    }
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Area-uniform shell sampler using rejection on the solid-angle density.
pub struct ShellSampler<'a> {
    shape: &'a BaseShape,
    max_density: f64,
    /// Estimated total surface area.
    pub area: f64,
    /// Largest distance of a pilot surface point from the center.
    pub bounding_radius: f64,
}

impl<'a> ShellSampler<'a> {
    pub fn new(shape: &'a BaseShape, rng: &mut impl Rng, pilots: usize) -> Self {
        let mut max_density: f64 = 0.0;
        let mut sum = 0.0;
        let mut bounding_radius: f64 = 0.0;
        for _ in 0..pilots {
            let d = random_unit(rng);
            let j = shape.area_density(&d);
            max_density = max_density.max(j);
            sum += j;
            bounding_radius = bounding_radius.max(shape.radial_point(&d).norm());
        }
        let area = match shape {
            BaseShape::Sphere { radius } => 4.0 * PI * radius * radius,
            _ => 4.0 * PI * sum / pilots as f64,
        };
        Self {
            shape,
            max_density: max_density * 1.05,
            area,
            bounding_radius,
        }
    }

    /// One surface point with its outward normal.
    pub fn sample(&self, rng: &mut impl Rng) -> (Vec3, Vec3) {
        loop {
            let d = random_unit(rng);
            let j = self.shape.area_density(&d);
            if rng.random::<f64>() * self.max_density <= j {
                let p = self.shape.radial_point(&d);
                return (p, self.shape.normal(&p));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shapes() -> Vec<BaseShape> {
        vec![
            BaseShape::default(),
            BaseShape::box_default(),
            BaseShape::ellipsoid_default(),
            BaseShape::superquadric_default(),
        ]
    }

    #[test]
    fn radial_points_lie_on_the_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for shape in shapes() {
            for _ in 0..100 {
                let p = shape.radial_point(&random_unit(&mut rng));
                assert!((shape.gauge(&p) - 1.0).abs() < 1e-12);
                assert!((shape.normal(&p).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normals_match_numeric_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for shape in shapes() {
            for _ in 0..20 {
                let p = shape.radial_point(&random_unit(&mut rng));
                let h = 1e-6;
                let grad = Vec3::new(
                    shape.gauge(&(p + Vec3::x() * h)) - shape.gauge(&(p - Vec3::x() * h)),
                    shape.gauge(&(p + Vec3::y() * h)) - shape.gauge(&(p - Vec3::y() * h)),
                    shape.gauge(&(p + Vec3::z() * h)) - shape.gauge(&(p - Vec3::z() * h)),
                );
                if let BaseShape::Box { .. } = shape {
                    continue;
                }
                assert!((grad.normalize() - shape.normal(&p)).norm() < 1e-5, "{shape:?}");
            }
        }
    }

    #[test]
    fn box_area_estimate() {
        let shape = BaseShape::Box {
            half_extents: [0.5, 0.5, 0.5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sampler = ShellSampler::new(&shape, &mut rng, 100_000);
        assert!((sampler.area - 6.0).abs() < 0.06, "{}", sampler.area);
    }

    #[test]
    fn ellipsoid_area_estimate() {
        // Prolate spheroid a = b = 0.3, c = 0.5: 2πa² (1 + c/(a e) asin e).
        let (a, c) = (0.3f64, 0.5f64);
        let e = (1.0 - a * a / (c * c)).sqrt();
        let exact = 2.0 * PI * a * a * (1.0 + c / (a * e) * e.asin());
        let shape = BaseShape::Ellipsoid { radii: [a, a, c] };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sampler = ShellSampler::new(&shape, &mut rng, 100_000);
        assert!((sampler.area / exact - 1.0).abs() < 0.01);
    }
}
