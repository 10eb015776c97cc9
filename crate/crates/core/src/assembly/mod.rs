//! Relative pose estimation, pairwise assembly and multi-part pose-graph
//! synchronization.

mod estimator;
mod graph;
mod refine;

pub use estimator::{
    estimate_transform, estimate_transform_oriented, estimate_transform_with, Estimate, EstimatorConfig, PairNormals,
};
pub use refine::{contact_points, icp_refine, RefineConfig};
pub use graph::{
    refine_poses, spanning_tree_init, synchronize, tree_init, PoseEdge, PoseGraph, REFINE_ROUNDS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, PointCloud, RigidTransform, DEFAULT_NORMAL_K};
use crate::matcher::{match_pair, Correspondences, MatchConfig, MatcherModel};
use crate::metrics::{multi_metrics, pair_metrics, MetricBundle};
use crate::synth::PartPose;

/// How a pairwise result is turned into a pose-graph edge weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeConfidence {
    /// Contact points of the verified pose; falls back to the inlier count
    /// when verification did not run.
    #[default]
    Contact,
    /// Correspondence count times mean match weight.
    CountTimesMeanWeight,
    /// Inlier count of the accepted estimate.
    Inliers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblyConfig {
    pub matcher: MatchConfig,
    pub estimator: EstimatorConfig,
    pub refine: RefineConfig,
    pub edge_confidence: EdgeConfidence,
}

impl Default for AssemblyConfig {
    /// Matching for mating surfaces: target descriptors are mirrored so a
    /// face matches its counterpart rather than a copy of itself.
    fn default() -> Self {
        Self {
            matcher: MatchConfig {
                complementary: true,
                ..MatchConfig::default()
            },
            estimator: EstimatorConfig::default(),
            refine: RefineConfig::default(),
            edge_confidence: EdgeConfidence::default(),
        }
    }
}

impl AssemblyConfig {
    pub fn validate(&self) -> Result<()> {
        self.matcher.validate()?;
        self.estimator.validate()?;
        self.refine.validate()
    }
}

/// Outcome of assembling a source part onto a target part.
#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyResult {
    /// Maps the source part into the target's frame.
    pub transform: RigidTransform,
    pub correspondences: usize,
    pub inlier_ratio: f64,
    pub mean_weight: f64,
    /// Contact points under `transform`, when verification ran.
    pub contact: Option<usize>,
    pub metrics: Option<MetricBundle>,
}

impl AssemblyResult {
    fn confidence(&self, mode: EdgeConfidence) -> f64 {
        match mode {
            EdgeConfidence::Contact => match self.contact {
                Some(c) => c as f64,
                None => self.confidence(EdgeConfidence::Inliers),
            },
            EdgeConfidence::CountTimesMeanWeight => self.correspondences as f64 * self.mean_weight,
            EdgeConfidence::Inliers => (self.inlier_ratio * self.correspondences as f64).round(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiResult {
    pub anchor: usize,
    /// Pose of every part in the anchor frame. Parts outside the anchor's
    /// component keep the identity and are listed in `unplaced`.
    pub poses: Vec<RigidTransform>,
    pub edges: Vec<PoseEdge>,
    pub unplaced: Vec<usize>,
    pub metrics: Option<MetricBundle>,
}

impl MultiResult {
    pub fn is_partial(&self) -> bool {
        !self.unplaced.is_empty()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            anchor: usize,
            poses: Vec<PartPose>,
            edges: &'a [PoseEdge],
            #[serde(skip_serializing_if = "<[usize]>::is_empty")]
            unplaced: &'a [usize],
            metrics: &'a Option<MetricBundle>,
        }
        let out = Out {
            anchor: self.anchor,
            poses: self
                .poses
                .iter()
                .enumerate()
                .map(|(part, pose)| PartPose { part, pose: *pose })
                .collect(),
            edges: &self.edges,
            unplaced: &self.unplaced,
            metrics: &self.metrics,
        };
        serde_json::to_string_pretty(&out).expect("result serializes")
    }
}

/// Matcher weights plus settings, built once and reused across pairs.
#[derive(Clone, Debug)]
pub struct Assembler {
    cfg: AssemblyConfig,
    model: MatcherModel,
}

impl Assembler {
    pub fn new(cfg: AssemblyConfig) -> Result<Self> {
        cfg.validate()?;
        let model = MatcherModel::new(&cfg.matcher)?;
        Ok(Self { cfg, model })
    }

    pub fn config(&self) -> &AssemblyConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MatcherModel {
        &self.model
    }

    pub fn correspondences(&self, x: &PointCloud, y: &PointCloud) -> Result<Correspondences> {
        match_pair(x, y, &self.model, &self.cfg.matcher)
    }

    /// Estimates the pose of `x` in `y`'s frame. `gt`, when given, is the
    /// true pose of `x` in that frame and enables metrics.
    pub fn pair(&self, x: &PointCloud, y: &PointCloud, gt: Option<&RigidTransform>) -> Result<AssemblyResult> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (x, y) = (&with_normals(x)?, &with_normals(y)?);
        let corr = self.correspondences(x, y)?;
        let mut est_cfg = self.cfg.estimator.clone();
        if est_cfg.inlier_radius.is_none() {
            est_cfg.inlier_radius = Some(est_cfg.inlier_ratio * y.extent());
        }
        let normals = x.normals().zip(y.normals()).map(|(nx, ny)| {
            let src: Vec<_> = corr.pairs.iter().map(|c| nx[c.src_index]).collect();
            let dst: Vec<_> = corr.pairs.iter().map(|c| ny[c.dst_index]).collect();
            (src, dst)
        });
        let est = estimate_transform_oriented(
            &corr,
            normals.as_ref().map(|(src, dst)| PairNormals { src, dst }),
            &est_cfg,
        )?;
        let mut transform = est.transform;
        let mut contact = None;
        if let (true, Some(nx), Some(ny)) = (self.cfg.refine.enabled, x.normals(), y.normals()) {
            let surface = refine::Surface::new(y, ny);
            if let Some((t, c)) = refine::verify(x, nx, &surface, &est.candidates, &self.cfg.refine) {
                transform = t;
                contact = Some(c);
            }
        }
        let mean_weight = corr.pairs.iter().map(|c| c.w).sum::<f64>() / corr.len() as f64;
        Ok(AssemblyResult {
            transform,
            correspondences: corr.len(),
            inlier_ratio: est.inlier_ratio,
            mean_weight,
            contact,
            metrics: gt.map(|g| pair_metrics(x, y, &transform, g)),
        })
    }

    /// Assembles all parts. Every unordered pair is matched with the larger
    /// part as target (lower index on ties); pairs without matches are
    /// dropped. `gt` holds true poses in the anchor frame.
    pub fn multi(&self, parts: &[PointCloud], gt: Option<&[RigidTransform]>) -> Result<MultiResult> {
        if parts.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 parts, got {}", parts.len())));
        }
        if parts.iter().any(PointCloud::is_empty) {
            return Err(Error::EmptyInput);
        }
        let owned: Vec<_> = parts.iter().map(with_normals).collect::<Result<_>>()?;
        let clouds: Vec<&PointCloud> = owned.iter().map(|c| c.as_ref()).collect();
        let pairs: Vec<(usize, usize)> = (0..parts.len())
            .flat_map(|a| (a + 1..parts.len()).map(move |b| (a, b)))
            .map(|(a, b)| if parts[b].len() > parts[a].len() { (a, b) } else { (b, a) })
            .collect();
        let results: Vec<Result<Option<PoseEdge>>> = pairs
            .par_iter()
            .map(|&(src, dst)| match self.pair(clouds[src], clouds[dst], None) {
                Ok(r) => Ok(Some(PoseEdge {
                    i: src,
                    j: dst,
                    transform: r.transform,
                    confidence: r.confidence(self.cfg.edge_confidence),
                })),
                Err(Error::NoMatch) | Err(Error::DegenerateCorrespondences) => Ok(None),
                Err(Error::Context { source, .. }) if matches!(*source, Error::DegenerateCorrespondences) => Ok(None),
                Err(e) => Err(e),
            })
            .collect();
        let mut edges = Vec::new();
        for r in results {
            if let Some(e) = r? {
                edges.push(e);
            } else {
                log::warn!("pair dropped from the pose graph: no usable correspondences");
            }
        }
        let sizes: Vec<usize> = parts.iter().map(PointCloud::len).collect();
        let graph = PoseGraph::from_part_sizes(&sizes, edges)?;
        let anchor = graph.anchor();
        let (sub, members) = graph.anchor_component();
        let sub_poses = synchronize(&sub)?;
        let mut poses = vec![RigidTransform::identity(); parts.len()];
        for (k, &v) in members.iter().enumerate() {
            poses[v] = sub_poses[k];
        }
        let unplaced: Vec<usize> = (0..parts.len()).filter(|v| !members.contains(v)).collect();
        if !unplaced.is_empty() {
            log::warn!("pose graph disconnected; parts {unplaced:?} left unplaced");
        }
        let metrics = gt.map(|g| multi_metrics(parts, &poses, g, anchor)).transpose()?;
        Ok(MultiResult {
            anchor,
            poses,
            edges: graph.edges().to_vec(),
            unplaced,
            metrics,
        })
    }
}

/// Borrows clouds that carry normals; estimates them otherwise.
fn with_normals(cloud: &PointCloud) -> Result<std::borrow::Cow<'_, PointCloud>> {
    if cloud.normals().is_some() {
        Ok(std::borrow::Cow::Borrowed(cloud))
    } else {
        estimate_normals(cloud, DEFAULT_NORMAL_K).map(std::borrow::Cow::Owned)
    }
}

/// One-shot pairwise assembly: builds the matcher and runs [`Assembler::pair`].
pub fn assemble_pair(
    x: &PointCloud,
    y: &PointCloud,
    cfg: &AssemblyConfig,
    gt: Option<&RigidTransform>,
) -> Result<AssemblyResult> {
    Assembler::new(cfg.clone())?.pair(x, y, gt)
}

/// One-shot multi-part assembly: builds the matcher and runs
/// [`Assembler::multi`].
pub fn assemble_multi(
    parts: &[PointCloud],
    cfg: &AssemblyConfig,
    gt: Option<&[RigidTransform]>,
) -> Result<MultiResult> {
    Assembler::new(cfg.clone())?.multi(parts, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, CutKind, FractureSpec};

    #[test]
    fn empty_target_is_rejected() {
        // Empty clouds cannot be constructed, so an empty part never reaches
        // the pipeline.
        assert!(matches!(PointCloud::new(Vec::new()), Err(Error::EmptyInput)));
    }

    #[test]
    fn aligned_flat_halves_reassemble() {
        // A flat cut through a sphere leaves every spin about the cut normal
        // equally valid, so only the geometry and the spin axis are checked.
        let sample = generate(&FractureSpec {
            perturb: false,
            cut: CutKind::Plane,
            plane_normals: Some(vec![[0.0, 0.0, 1.0]]),
            seed: 1,
            ..FractureSpec::default()
        })
        .unwrap();
        let other = 1 - sample.anchor;
        let r = assemble_pair(
            &sample.parts[other],
            &sample.parts[sample.anchor],
            &AssemblyConfig::default(),
            Some(&sample.gt_poses[other]),
        )
        .unwrap();
        let m = r.metrics.unwrap();
        assert!(m.cd < 1e-3, "{m:?}");
        // A spin about an axis parallel to z may translate in x and y, never along z.
        assert!(r.transform.translation().z.abs() < 0.02, "{:?}", r.transform);
        if let Some(axis) = r.transform.quaternion().axis() {
            assert!(axis.z.abs() > 0.99, "{axis:?}");
        }
        assert!((0.0..=1.0).contains(&r.inlier_ratio));
    }

    #[test]
    fn parts_without_normals_still_assemble() {
        let sample = generate(&FractureSpec {
            seed: 5,
            ..FractureSpec::default()
        })
        .unwrap();
        let bare: Vec<PointCloud> = sample
            .parts
            .iter()
            .map(|p| PointCloud::new(p.points().to_vec()).unwrap())
            .collect();
        let other = 1 - sample.anchor;
        let r = assemble_pair(
            &bare[other],
            &bare[sample.anchor],
            &AssemblyConfig::default(),
            Some(&sample.gt_poses[other]),
        )
        .unwrap();
        let m = r.metrics.unwrap();
        assert!(m.rmse_r < 5.0 && m.crd < 0.05, "{m:?}");
    }

    #[test]
    fn two_parts_match_the_pair_path() {
        let sample = generate(&FractureSpec {
            seed: 2,
            ..FractureSpec::default()
        })
        .unwrap();
        let asm = Assembler::new(AssemblyConfig::default()).unwrap();
        let multi = asm.multi(&sample.parts, Some(&sample.gt_poses)).unwrap();
        let other = 1 - sample.anchor;
        let pair = asm.pair(&sample.parts[other], &sample.parts[sample.anchor], None).unwrap();
        assert_eq!(multi.anchor, sample.anchor);
        assert_eq!(multi.poses[sample.anchor], RigidTransform::identity());
        assert!(multi.poses[other].rotation_distance(&pair.transform) < 1e-12);
    }
}
