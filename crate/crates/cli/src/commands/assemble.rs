use std::path::Path;

use anyhow::{bail, Context, Result};
use pmtr_core::assembly::{Assembler, PoseEdge};
use pmtr_core::matcher::config_hash;
use pmtr_core::metrics::MetricBundle;
use pmtr_core::synth::{load_sample_dir, PartPose};
use pmtr_core::RigidTransform;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::write_atomic;

pub const CSV_PREFIX: &str = "sample,parts,config";

#[derive(Serialize)]
struct Report<'a> {
    sample: &'a str,
    path: &'static str,
    config: &'a str,
    anchor: usize,
    poses: Vec<PartPose>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correspondences: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inlier_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contact: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<PoseEdge>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unplaced: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricBundle>,
}

fn largest(sizes: &[usize]) -> usize {
    (0..sizes.len()).fold(0, |best, i| if sizes[i] > sizes[best] { i } else { best })
}

/// Assembles one sample directory. Two parts take the pairwise path, more
/// take the pose-graph path. Writes `result.json`, `config.json` and, when
/// the sample has ground truth, `metrics.csv`.
pub fn run(cfg: &RunConfig, sample_dir: &Path, out: &Path) -> Result<()> {
    let sample = load_sample_dir(sample_dir).with_context(|| format!("loading {}", sample_dir.display()))?;
    let name = sample_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into());
    let parts = &sample.parts;
    if parts.len() < 2 {
        bail!("{}: need at least 2 parts, found {}", sample_dir.display(), parts.len());
    }
    let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    let anchor = largest(&sizes);
    // Ground truth re-expressed in the frame of the anchor chosen here.
    let gt: Option<Vec<RigidTransform>> = match &sample.ground_truth {
        Some(g) if g.poses.len() != parts.len() => {
            bail!("gt.json lists {} poses for {} parts", g.poses.len(), parts.len())
        }
        Some(g) => {
            let mut poses = vec![RigidTransform::identity(); parts.len()];
            for p in &g.poses {
                poses[p.part] = p.pose;
            }
            let back = poses[anchor].inverse();
            Some(poses.iter().map(|p| back.compose(p)).collect())
        }
        None => {
            log::warn!("{}: no gt.json, metrics omitted", sample_dir.display());
            None
        }
    };

    let hash = config_hash(&cfg.assembly);
    let assembler = Assembler::new(cfg.assembly.clone())?;
    let report = if parts.len() == 2 {
        let src = 1 - anchor;
        let r = assembler.pair(&parts[src], &parts[anchor], gt.as_ref().map(|g| &g[src]))?;
        let mut poses = vec![RigidTransform::identity(); 2];
        poses[src] = r.transform;
        Report {
            sample: &name,
            path: "pairwise",
            config: &hash,
            anchor,
            poses: to_part_poses(&poses),
            correspondences: Some(r.correspondences),
            inlier_ratio: Some(r.inlier_ratio),
            mean_weight: Some(r.mean_weight),
            contact: r.contact,
            edges: None,
            unplaced: None,
            metrics: r.metrics,
        }
    } else {
        let r = assembler.multi(parts, gt.as_deref())?;
        Report {
            sample: &name,
            path: "multi",
            config: &hash,
            anchor: r.anchor,
            poses: to_part_poses(&r.poses),
            correspondences: None,
            inlier_ratio: None,
            mean_weight: None,
            contact: None,
            edges: Some(r.edges),
            unplaced: Some(r.unplaced),
            metrics: r.metrics,
        }
    };

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    write_atomic(&out.join("result.json"), json.as_bytes())?;
    write_atomic(&out.join("config.json"), cfg.to_json().as_bytes())?;
    if let Some(m) = &report.metrics {
        let row = format!(
            "{CSV_PREFIX},{}\n{name},{},{hash},{}\n",
            MetricBundle::CSV_HEADER,
            parts.len(),
            m.csv_fields().join(",")
        );
        write_atomic(&out.join("metrics.csv"), row.as_bytes())?;
    }
    Ok(())
}

fn to_part_poses(poses: &[RigidTransform]) -> Vec<PartPose> {
    poses
        .iter()
        .enumerate()
        .map(|(part, pose)| PartPose { part, pose: *pose })
        .collect()
}
