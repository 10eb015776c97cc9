//! Synthetic fractured shapes with exact ground truth.
//!
//! A base solid is split by `parts − 1` sequential cuts, each through the
//! centroid of the currently largest piece. Cuts are planes, optionally
//! displaced along their normal by a smooth height field
//!
//! ```text
//! h(u, v) = A · Σ_k w_k · sin(2π f (d_k · (u, v)) + φ_k),   w = (0.5, 0.3, 0.2)
//! ```
//!
//! so that mating faces carry matchable relief. The outer shell and both
//! sides of every cut face are sampled uniformly by area at a common
//! density, then each part receives an independent random rigid motion.

mod shape;

pub use shape::{random_unit, BaseShape, ShellSampler};

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::io::{read_cloud, write_ply};
use crate::geometry::{apply_transform, PointCloud, RigidTransform, Vec3};

pub const MIN_PARTS: usize = 2;
pub const MAX_PARTS: usize = 20;
pub const MIN_PART_POINTS: usize = 50;
const MAX_ATTEMPTS: usize = 20;
const JITTER_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];
const SHELL_PILOTS: usize = 20_000;
const FACE_PILOTS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CutKind {
    Plane,
    Jittered { amplitude: f64, frequency: f64 },
}

impl Default for CutKind {
    fn default() -> Self {
        CutKind::Jittered {
            amplitude: 0.03,
            frequency: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FractureSpec {
    pub shape: BaseShape,
    pub parts: usize,
    pub cut: CutKind,
    /// Target total point count.
    pub points: usize,
    /// Apply independent random rigid motions to the parts.
    pub perturb: bool,
    /// Translations are drawn from `[-r, r]³`.
    pub translation_range: f64,
    /// Optional fixed cut normals, used in order before random ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plane_normals: Option<Vec<[f64; 3]>>,
    pub seed: u64,
}

impl Default for FractureSpec {
    fn default() -> Self {
        Self {
            shape: BaseShape::default(),
            parts: 2,
            cut: CutKind::default(),
            points: 5000,
            perturb: true,
            translation_range: 0.5,
            plane_normals: None,
            seed: 0,
        }
    }
}

impl FractureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_PARTS..=MAX_PARTS).contains(&self.parts) {
            return Err(Error::InvalidArgument(format!(
                "parts must be within {MIN_PARTS}..={MAX_PARTS}, got {}",
                self.parts
            )));
        }
        if let CutKind::Jittered { amplitude, frequency } = self.cut {
            if !(amplitude >= 0.0 && amplitude.is_finite() && frequency.is_finite()) {
                return Err(Error::InvalidArgument("jitter amplitude must be >= 0".into()));
            }
        }
        if self.points < self.parts * MIN_PART_POINTS {
            return Err(Error::InvalidArgument("too few points for the requested parts".into()));
        }
        if !(self.translation_range >= 0.0) {
            return Err(Error::InvalidArgument("translation range must be >= 0".into()));
        }
        self.shape.validate().map_err(Error::InvalidArgument)
    }
}

/// A generated sample. `parts` are posed; `gt_poses[i]` maps part `i` into
/// the anchor's posed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FractureSample {
    pub spec: FractureSpec,
    pub parts: Vec<PointCloud>,
    pub gt_poses: Vec<RigidTransform>,
    pub anchor: usize,
    /// Parts before perturbation, in the shape's own frame.
    pub canonical: Vec<PointCloud>,
    /// Motion applied to each canonical part.
    pub perturbations: Vec<RigidTransform>,
}

#[derive(Clone, Debug)]
struct Jitter {
    amplitude: f64,
    frequency: f64,
    dirs: [[f64; 2]; 3],
    phases: [f64; 3],
}

impl Jitter {
    fn random(amplitude: f64, frequency: f64, rng: &mut impl Rng) -> Self {
        let mut dirs = [[0.0; 2]; 3];
        let mut phases = [0.0; 3];
        for k in 0..3 {
            let a = rng.random::<f64>() * 2.0 * PI;
            dirs[k] = [a.cos(), a.sin()];
            phases[k] = rng.random::<f64>() * 2.0 * PI;
        }
        Self {
            amplitude,
            frequency,
            dirs,
            phases,
        }
    }

    /// Height and its `(∂u, ∂v)` gradient.
    fn eval(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let omega = 2.0 * PI * self.frequency;
        let mut h = 0.0;
        let (mut hu, mut hv) = (0.0, 0.0);
        for k in 0..3 {
            let [du, dv] = self.dirs[k];
            let arg = omega * (du * u + dv * v) + self.phases[k];
            h += JITTER_WEIGHTS[k] * arg.sin();
            let c = JITTER_WEIGHTS[k] * arg.cos() * omega;
            hu += c * du;
            hv += c * dv;
        }
        (self.amplitude * h, self.amplitude * hu, self.amplitude * hv)
    }

    fn max_slope(&self) -> f64 {
        self.amplitude * 2.0 * PI * self.frequency * JITTER_WEIGHTS.iter().sum::<f64>()
    }
}

#[derive(Clone, Debug)]
struct Cut {
    origin: Vec3,
    normal: Vec3,
    u: Vec3,
    v: Vec3,
    jitter: Option<Jitter>,
}

impl Cut {
    fn new(origin: Vec3, normal: Vec3, jitter: Option<Jitter>) -> Self {
        let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = normal.cross(&helper).normalize();
        let v = normal.cross(&u);
        Self {
            origin,
            normal,
            u,
            v,
            jitter,
        }
    }

    fn height(&self, u: f64, v: f64) -> (f64, f64, f64) {
        self.jitter.as_ref().map_or((0.0, 0.0, 0.0), |j| j.eval(u, v))
    }

    /// Positive on the side the normal points to.
    fn signed(&self, p: &Vec3) -> f64 {
        let d = p - self.origin;
        let (h, _, _) = self.height(self.u.dot(&d), self.v.dot(&d));
        self.normal.dot(&d) - h
    }

    /// Surface point, unnormalized `∇s`, and area element at `(u, v)`.
    fn surface(&self, u: f64, v: f64) -> (Vec3, Vec3, f64) {
        let (h, hu, hv) = self.height(u, v);
        let p = self.origin + self.u * u + self.v * v + self.normal * h;
        let grad = self.normal - self.u * hu - self.v * hv;
        (p, grad, (1.0 + hu * hu + hv * hv).sqrt())
    }

    fn max_area_element(&self) -> f64 {
        let s = self.jitter.as_ref().map_or(0.0, Jitter::max_slope);
        (1.0 + s * s).sqrt()
    }
}

/// A piece as the list of `(cut, positive side)` constraints bounding it.
type Leaf = Vec<(usize, bool)>;

fn in_leaf(cuts: &[Cut], leaf: &Leaf, p: &Vec3, forced: Option<(usize, bool)>) -> bool {
    leaf.iter().all(|&(c, positive)| match forced {
        Some((fc, side)) if fc == c => side == positive,
        _ => (cuts[c].signed(p) >= 0.0) == positive,
    })
}

fn locate(cuts: &[Cut], leaves: &[Leaf], p: &Vec3, forced: Option<(usize, bool)>) -> Option<usize> {
    leaves.iter().position(|leaf| in_leaf(cuts, leaf, p, forced))
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q = Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    UnitQuaternion::from_quaternion(q)
}

struct Layout {
    cuts: Vec<Cut>,
    leaves: Vec<Leaf>,
    /// Leaf split by each cut, as its constraints before the split.
    split_leaf: Vec<Leaf>,
}

fn choose_cuts(spec: &FractureSpec, pilots: &[Vec3], rng: &mut ChaCha8Rng) -> Layout {
    let mut cuts: Vec<Cut> = Vec::new();
    let mut leaves: Vec<Leaf> = vec![Vec::new()];
    let mut split_leaf = Vec::new();
    for c in 0..spec.parts - 1 {
        let members: Vec<Vec<&Vec3>> = leaves
            .iter()
            .map(|leaf| pilots.iter().filter(|p| in_leaf(&cuts, leaf, p, None)).collect())
            .collect();
        let target = (0..leaves.len()).fold(0, |best, i| if members[i].len() > members[best].len() { i } else { best });
        let count = members[target].len().max(1) as f64;
        let centroid = members[target].iter().copied().sum::<Vec3>() / count;
        let normal = match spec.plane_normals.as_ref().and_then(|n| n.get(c)) {
            Some(n) => Vec3::from(*n).normalize(),
            None => random_unit(rng),
        };
        let jitter = match spec.cut {
            CutKind::Plane => None,
            CutKind::Jittered { amplitude, frequency } => Some(Jitter::random(amplitude, frequency, rng)),
        };
        cuts.push(Cut::new(centroid, normal, jitter));
        let parent = leaves[target].clone();
        split_leaf.push(parent.clone());
        let mut neg = parent;
        leaves[target].push((c, true));
        neg.push((c, false));
        leaves.push(neg);
    }
    Layout {
        cuts,
        leaves,
        split_leaf,
    }
}

struct FaceSampler<'a> {
    cut: &'a Cut,
    index: usize,
    leaf: &'a Leaf,
    half_width: f64,
    max_element: f64,
    area: f64,
}

impl<'a> FaceSampler<'a> {
    fn new(shape: &BaseShape, layout: &'a Layout, index: usize, half_width: f64, rng: &mut impl Rng) -> Self {
        let cut = &layout.cuts[index];
        let mut sampler = Self {
            cut,
            index,
            leaf: &layout.split_leaf[index],
            half_width,
            max_element: cut.max_area_element(),
            area: 0.0,
        };
        let mut sum = 0.0;
        for _ in 0..FACE_PILOTS {
            let (u, v) = sampler.draw_uv(rng);
            if let Some((_, _, j)) = sampler.accept(shape, &layout.cuts, u, v) {
                sum += j;
            }
        }
        sampler.area = (2.0 * half_width).powi(2) * sum / FACE_PILOTS as f64;
        sampler
    }

    fn draw_uv(&self, rng: &mut impl Rng) -> (f64, f64) {
        let w = self.half_width;
        (rng.random_range(-w..w), rng.random_range(-w..w))
    }

    fn accept(&self, shape: &BaseShape, cuts: &[Cut], u: f64, v: f64) -> Option<(Vec3, Vec3, f64)> {
        let (p, grad, j) = self.cut.surface(u, v);
        (shape.gauge(&p) < 1.0 && in_leaf(cuts, self.leaf, &p, Some((self.index, true)))).then_some((p, grad, j))
    }

    fn sample(&self, shape: &BaseShape, cuts: &[Cut], rng: &mut impl Rng) -> (Vec3, Vec3) {
        loop {
            let (u, v) = self.draw_uv(rng);
            if let Some((p, grad, j)) = self.accept(shape, cuts, u, v) {
                if rng.random::<f64>() * self.max_element <= j {
                    return (p, grad.normalize());
                }
            }
        }
    }
}

fn sample_parts(spec: &FractureSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<PointCloud>, Vec<Cut>)> {
    let shell = ShellSampler::new(&spec.shape, rng, SHELL_PILOTS);
    let pilots: Vec<Vec3> = (0..SHELL_PILOTS / 5).map(|_| shell.sample(rng).0).collect();
    let layout = choose_cuts(spec, &pilots, rng);
    let half_width = shell.bounding_radius * 1.05
        + layout.cuts.iter().map(|c| c.origin.norm()).fold(0.0, f64::max)
        + 0.1;
    let faces: Vec<FaceSampler> = (0..layout.cuts.len())
        .map(|c| FaceSampler::new(&spec.shape, &layout, c, half_width, rng))
        .collect();
    let total_area = shell.area + 2.0 * faces.iter().map(|f| f.area).sum::<f64>();
    let density = spec.points as f64 / total_area;

    let mut points = vec![Vec::new(); layout.leaves.len()];
    let mut normals = vec![Vec::new(); layout.leaves.len()];
    for _ in 0..(density * shell.area).round() as usize {
        let (p, n) = shell.sample(rng);
        if let Some(leaf) = locate(&layout.cuts, &layout.leaves, &p, None) {
            points[leaf].push(p);
            normals[leaf].push(n);
        }
    }
    for face in &faces {
        let count = (density * face.area).round() as usize;
        for positive in [true, false] {
            for _ in 0..count {
                let (p, grad) = face.sample(&spec.shape, &layout.cuts, rng);
                let forced = Some((face.index, positive));
                if let Some(leaf) = locate(&layout.cuts, &layout.leaves, &p, forced) {
                    points[leaf].push(p);
                    // The positive side's outward direction is −∇s.
                    normals[leaf].push(if positive { -grad } else { grad });
                }
            }
        }
    }
    if let Some(small) = points.iter().position(|p| p.len() < MIN_PART_POINTS) {
        return Err(Error::Generation(format!(
            "part {small} received {} points (< {MIN_PART_POINTS})",
            points[small].len()
        )));
    }
    let parts = points
        .into_iter()
        .zip(normals)
        .map(|(p, n)| PointCloud::with_normals(p, Some(n)))
        .collect::<Result<_>>()?;
    Ok((parts, layout.cuts))
}

/// Generates a fractured sample; identical specs give identical samples.
pub fn generate(spec: &FractureSpec) -> Result<FractureSample> {
    generate_with_cuts(spec).map(|(sample, _)| sample)
}

fn generate_with_cuts(spec: &FractureSpec) -> Result<(FractureSample, Vec<Cut>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_err = None;
    for _ in 0..MAX_ATTEMPTS {
        match sample_parts(spec, &mut rng) {
            Ok((canonical, cuts)) => return Ok((pose_parts(spec, canonical, &mut rng), cuts)),
            Err(e @ Error::Generation(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "no valid cut after {MAX_ATTEMPTS} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn pose_parts(spec: &FractureSpec, canonical: Vec<PointCloud>, rng: &mut ChaCha8Rng) -> FractureSample {
    let anchor = (0..canonical.len()).fold(0, |best, i| if canonical[i].len() > canonical[best].len() { i } else { best });
    let perturbations: Vec<RigidTransform> = canonical
        .iter()
        .map(|part| {
            if !spec.perturb {
                return RigidTransform::identity();
            }
            let q = random_rotation(rng);
            let r = spec.translation_range;
            let tau = Vec3::new(rng.random_range(-r..=r), rng.random_range(-r..=r), rng.random_range(-r..=r));
            // Rotate about the part centroid, then move the centroid to `tau`.
            let c = part.centroid();
            RigidTransform::from_quaternion(q, tau - q * c)
        })
        .collect();
    let parts = canonical.iter().zip(&perturbations).map(|(p, m)| apply_transform(m, p)).collect();
    let to_anchor = perturbations[anchor];
    let gt_poses = perturbations.iter().map(|m| to_anchor.compose(&m.inverse())).collect();
    FractureSample {
        spec: spec.clone(),
        parts,
        gt_poses,
        anchor,
        canonical,
        perturbations,
    }
}

/// Largest distance between a part point taken through its GT pose (and the
/// anchor's inverse motion) and the same point before perturbation.
pub fn reassemble_check(sample: &FractureSample) -> f64 {
    reassemble_with(sample, &sample.gt_poses)
}

/// [`reassemble_check`] with substitute poses.
pub fn reassemble_with(sample: &FractureSample, poses: &[RigidTransform]) -> f64 {
    let back = sample.perturbations[sample.anchor].inverse();
    sample
        .parts
        .iter()
        .zip(poses)
        .zip(&sample.canonical)
        .flat_map(|((part, pose), canon)| {
            let t = back.compose(pose);
            part.points()
                .iter()
                .zip(canon.points())
                .map(move |(p, q)| (t.apply_point(p) - q).norm())
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartPose {
    pub part: usize,
    #[serde(flatten)]
    pub pose: RigidTransform,
}

/// Contents of `gt.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub anchor: usize,
    pub poses: Vec<PartPose>,
    pub spec: FractureSpec,
    pub seed: u64,
}

impl FractureSample {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            anchor: self.anchor,
            poses: self
                .gt_poses
                .iter()
                .enumerate()
                .map(|(part, pose)| PartPose { part, pose: *pose })
                .collect(),
            spec: self.spec.clone(),
            seed: self.spec.seed,
        }
    }

    /// Writes `part_<i>.ply` for every part and `gt.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (i, part) in self.parts.iter().enumerate() {
            write_ply(&dir.join(format!("part_{i}.ply")), part)?;
        }
        let json = serde_json::to_string_pretty(&self.ground_truth()).expect("ground truth serializes");
        fs::write(dir.join("gt.json"), json + "\n")?;
        Ok(())
    }
}

/// Parts and optional ground truth read back from a sample directory.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub parts: Vec<PointCloud>,
    pub ground_truth: Option<GroundTruth>,
}

pub fn load_sample_dir(dir: &Path) -> Result<LoadedSample> {
    let mut indexed: Vec<(usize, std::path::PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let idx = name.strip_prefix("part_")?.strip_suffix(".ply")?.parse().ok()?;
            Some((idx, e.path()))
        })
        .collect();
    indexed.sort();
    if indexed.iter().enumerate().any(|(i, (idx, _))| i != *idx) {
        return Err(Error::Parse(format!("{}: part files are not numbered 0..n", dir.display())));
    }
    if indexed.is_empty() {
        return Err(Error::Parse(format!("{}: no part_<i>.ply files", dir.display())));
    }
    let parts = indexed.iter().map(|(_, p)| read_cloud(p)).collect::<Result<Vec<_>>>()?;
    let gt_path = dir.join("gt.json");
    let ground_truth = if gt_path.exists() {
        let text = fs::read_to_string(&gt_path)?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", gt_path.display())))?)
    } else {
        None
    };
    Ok(LoadedSample { parts, ground_truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> FractureSpec {
        FractureSpec {
            seed,
            ..FractureSpec::default()
        }
    }

    #[test]
    fn unperturbed_pair_has_identity_gt() {
        let s = generate(&FractureSpec {
            perturb: false,
            ..spec(1)
        })
        .unwrap();
        for pose in &s.gt_poses {
            assert_eq!(*pose, RigidTransform::identity());
        }
    }

    #[test]
    fn hemispheres_get_equal_counts() {
        let s = generate(&FractureSpec {
            plane_normals: Some(vec![[0.0, 0.0, 1.0]]),
            cut: CutKind::Plane,
            ..spec(2)
        })
        .unwrap();
        let (a, b) = (s.parts[0].len() as f64, s.parts[1].len() as f64);
        assert!((a - b).abs() / a.max(b) < 0.05, "{a} {b}");
        let total = a + b;
        assert!((total - 5000.0).abs() <= 100.0, "{total}");
    }

    #[test]
    fn same_seed_same_sample() {
        assert_eq!(generate(&spec(3)).unwrap(), generate(&spec(3)).unwrap());
    }

    #[test]
    fn ground_truth_reassembles_exactly() {
        for parts in [2, 3, 5] {
            let s = generate(&FractureSpec { parts, ..spec(4) }).unwrap();
            assert!(reassemble_check(&s) < 1e-10);
            let largest = s.parts.iter().map(PointCloud::len).max().unwrap();
            assert_eq!(s.parts[s.anchor].len(), largest);
            assert_eq!(s.gt_poses[s.anchor].rotation_distance(&RigidTransform::identity()), 0.0);
        }
    }

    #[test]
    fn mating_bands_overlap() {
        let r = 0.025;
        for seed in 0..3 {
            let (s, cuts) = generate_with_cuts(&FractureSpec { seed, ..FractureSpec::default() }).unwrap();
            let band = |part: &PointCloud| -> Vec<Vec3> {
                part.points().iter().filter(|p| cuts[0].signed(p).abs() < 2.0 * r).copied().collect()
            };
            // Canonical parts are the GT reassembly.
            let (a, b) = (band(&s.canonical[0]), band(&s.canonical[1]));
            assert!(a.len() > 100 && b.len() > 100);
            let tree = crate::geometry::KdTree::new(&b);
            // Independent sampling leaves some points without a partner
            // within r, so the check is on the mean and the median.
            let mut d: Vec<f64> = a.iter().map(|p| tree.nearest_one(p).0.sqrt()).collect();
            d.sort_by(f64::total_cmp);
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            assert!(mean < r && d[d.len() / 2] < r, "seed {seed}: mean {mean}, median {}", d[d.len() / 2]);
        }
    }

    #[test]
    fn corrupted_pose_shows_up() {
        let s = generate(&spec(5)).unwrap();
        let other = 1 - s.anchor;
        let mut poses = s.gt_poses.clone();
        let turn = RigidTransform::from_axis_angle(Vec3::z(), 1f64.to_radians(), Vec3::zeros());
        poses[other] = turn.compose(&poses[other]);
        let deviation = reassemble_with(&s, &poses);
        assert!(deviation > 1e-3 && deviation < 0.05, "{deviation}");
    }

    #[test]
    fn out_of_range_parts_rejected() {
        assert!(generate(&FractureSpec { parts: 25, ..spec(0) }).is_err());
        assert!(generate(&FractureSpec { parts: 1, ..spec(0) }).is_err());
    }

    #[test]
    fn every_shape_generates() {
        for shape in [
            BaseShape::default(),
            BaseShape::box_default(),
            BaseShape::ellipsoid_default(),
            BaseShape::superquadric_default(),
        ] {
            let s = generate(&FractureSpec { shape, parts: 3, ..spec(6) }).unwrap();
            let total: usize = s.parts.iter().map(PointCloud::len).sum();
            assert!((total as f64 - 5000.0).abs() <= 100.0, "{total}");
        }
    }
}
