use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// Gauss-Seidel sweeps run by [`synchronize`].
pub const REFINE_ROUNDS: usize = 10;

/// Relative pose `T_ij` taking part `i` into part `j`'s frame, so consistent
/// global poses satisfy `pose_j⁻¹ ∘ pose_i = T_ij`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEdge {
    pub i: usize,
    pub j: usize,
    #[serde(flatten)]
    pub transform: RigidTransform,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph {
    nodes: usize,
    anchor: usize,
    edges: Vec<PoseEdge>,
}

impl PoseGraph {
    /// Anchors at the part with the most points; the lowest index wins ties.
    pub fn from_part_sizes(sizes: &[usize], edges: Vec<PoseEdge>) -> Result<Self> {
        let anchor = (0..sizes.len()).fold(0, |best, i| if sizes[i] > sizes[best] { i } else { best });
        Self::with_anchor(sizes.len(), anchor, edges)
    }

    pub fn with_anchor(nodes: usize, anchor: usize, edges: Vec<PoseEdge>) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::EmptyInput);
        }
        if anchor >= nodes {
            return Err(Error::InvalidArgument(format!("anchor {anchor} out of {nodes} nodes")));
        }
        for e in &edges {
            if e.i >= nodes || e.j >= nodes || e.i == e.j {
                return Err(Error::InvalidArgument(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !(e.confidence.is_finite() && e.confidence >= 0.0) {
                return Err(Error::InvalidArgument("edge confidence must be finite and >= 0".into()));
            }
        }
        Ok(Self { nodes, anchor, edges })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn edges(&self) -> &[PoseEdge] {
        &self.edges
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label: Vec<usize> = (0..self.nodes).collect();
        fn root(label: &mut [usize], mut a: usize) -> usize {
            while label[a] != a {
                label[a] = label[label[a]];
                a = label[a];
            }
            a
        }
        for e in &self.edges {
            let (a, b) = (root(&mut label, e.i), root(&mut label, e.j));
            label[a.max(b)] = a.min(b);
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; self.nodes];
        for v in 0..self.nodes {
            let r = root(&mut label, v);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(v);
        }
        groups
    }

    /// The subgraph reachable from the anchor, with node ids remapped.
    /// Returns the subgraph and the original id of every new node.
    pub fn anchor_component(&self) -> (PoseGraph, Vec<usize>) {
        let members = self
            .components()
            .into_iter()
            .find(|c| c.contains(&self.anchor))
            .expect("anchor belongs to a component");
        let mut new_id = vec![usize::MAX; self.nodes];
        for (k, &v) in members.iter().enumerate() {
            new_id[v] = k;
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| new_id[e.i] != usize::MAX)
            .map(|e| PoseEdge {
                i: new_id[e.i],
                j: new_id[e.j],
                ..*e
            })
            .collect();
        let graph = PoseGraph {
            nodes: members.len(),
            anchor: new_id[self.anchor],
            edges,
        };
        (graph, members)
    }

    fn require_connected(&self) -> Result<()> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(Error::DisconnectedGraph(comps));
        }
        Ok(())
    }
}

/// Pose of the far end of `e` given the pose of `from`.
fn propagate(e: &PoseEdge, from: usize, pose: &RigidTransform) -> RigidTransform {
    if from == e.j {
        pose.compose(&e.transform)
    } else {
        pose.compose(&e.transform.inverse())
    }
}

/// Composes poses outward from the anchor along a maximum-confidence
/// spanning tree (Prim). Earlier edges win confidence ties.
pub fn spanning_tree_init(graph: &PoseGraph) -> Result<Vec<RigidTransform>> {
    graph.require_connected()?;
    let mut poses = vec![None; graph.nodes];
    poses[graph.anchor] = Some(RigidTransform::identity());
    for _ in 1..graph.nodes {
        let mut best: Option<(&PoseEdge, usize)> = None;
        for e in &graph.edges {
            let from = match (poses[e.i].is_some(), poses[e.j].is_some()) {
                (true, false) => e.i,
                (false, true) => e.j,
                _ => continue,
            };
            if best.is_none_or(|(b, _)| e.confidence > b.confidence) {
                best = Some((e, from));
            }
        }
        let (e, from) = best.expect("connected graph always has a frontier edge");
        let to = if from == e.i { e.j } else { e.i };
        poses[to] = Some(propagate(e, from, &poses[from].expect("placed")));
    }
    Ok(poses.into_iter().map(|p| p.expect("all nodes placed")).collect())
}

/// Poses built by composing along the given edges (indices into the
/// graph's edge list), which must form a spanning tree.
pub fn tree_init(graph: &PoseGraph, tree: &[usize]) -> Result<Vec<RigidTransform>> {
    let mut poses = vec![None; graph.nodes];
    poses[graph.anchor] = Some(RigidTransform::identity());
    let mut pending: Vec<usize> = tree.to_vec();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|&k| {
            let e = &graph.edges[k];
            match (poses[e.i], poses[e.j]) {
                (Some(p), None) => {
                    poses[e.j] = Some(propagate(e, e.i, &p));
                    false
                }
                (None, Some(p)) => {
                    poses[e.i] = Some(propagate(e, e.j, &p));
                    false
                }
                (Some(_), Some(_)) => false,
                (None, None) => true,
            }
        });
        if pending.len() == before {
            break;
        }
    }
    poses
        .into_iter()
        .map(|p| p.ok_or_else(|| Error::InvalidArgument("edges do not span the graph".into())))
        .collect()
}

/// Weighted average of unit quaternions, each sign-aligned with `reference`.
fn average_rotation(samples: &[(UnitQuaternion<f64>, f64)], reference: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let mut acc = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for (q, w) in samples {
        let sign = if q.coords.dot(&reference.coords) < 0.0 { -1.0 } else { 1.0 };
        acc += q.quaternion() * (sign * w);
    }
    if acc.norm() < 1e-300 {
        return *reference;
    }
    UnitQuaternion::from_quaternion(acc)
}

/// Gauss-Seidel refinement: each non-anchor node in turn takes the
/// confidence-weighted mean of the rotations implied by its neighbors, then
/// the weighted least-squares translation given that rotation.
pub fn refine_poses(graph: &PoseGraph, mut poses: Vec<RigidTransform>, rounds: usize) -> Vec<RigidTransform> {
    let mut incident: Vec<Vec<&PoseEdge>> = vec![Vec::new(); graph.nodes];
    for e in &graph.edges {
        incident[e.i].push(e);
        incident[e.j].push(e);
    }
    for _ in 0..rounds {
        for k in 0..graph.nodes {
            if k == graph.anchor || incident[k].is_empty() {
                continue;
            }
            let rotations: Vec<(UnitQuaternion<f64>, f64)> = incident[k]
                .iter()
                .map(|e| {
                    let other = if e.i == k { e.j } else { e.i };
                    (propagate(e, other, &poses[other]).quaternion(), e.confidence)
                })
                .collect();
            let total: f64 = rotations.iter().map(|r| r.1).sum();
            if total <= 0.0 {
                continue;
            }
            let q = average_rotation(&rotations, &poses[k].quaternion());
            let r = q.to_rotation_matrix();
            let mut t = Vec3::zeros();
            for e in &incident[k] {
                // pose_j⁻¹ ∘ pose_i = T_ij, solved for the translation of node k.
                let implied = if e.i == k {
                    let pj = &poses[e.j];
                    pj.translation() + pj.rotation() * e.transform.translation()
                } else {
                    let pi = &poses[e.i];
                    pi.translation() - r * e.transform.translation()
                };
                t += implied * e.confidence;
            }
            poses[k] = RigidTransform::from_quaternion(q, t / total);
        }
    }
    poses
}

/// Global poses mapping every part into the anchor frame.
pub fn synchronize(graph: &PoseGraph) -> Result<Vec<RigidTransform>> {
    let init = spanning_tree_init(graph)?;
    Ok(refine_poses(graph, init, REFINE_ROUNDS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = random_unit(rng);
        let t = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        RigidTransform::from_axis_angle(axis, rng.random_range(0.0..3.0), t)
    }

    fn edge(gt: &[RigidTransform], i: usize, j: usize, confidence: f64) -> PoseEdge {
        PoseEdge {
            i,
            j,
            transform: gt[j].inverse().compose(&gt[i]),
            confidence,
        }
    }

    fn anchored(gt: Vec<RigidTransform>, anchor: usize) -> Vec<RigidTransform> {
        let inv = gt[anchor].inverse();
        gt.iter().map(|p| inv.compose(p)).collect()
    }

    #[test]
    fn two_nodes_take_the_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = anchored(vec![random_pose(&mut rng), random_pose(&mut rng)], 1);
        let g = PoseGraph::from_part_sizes(&[10, 20], vec![edge(&gt, 0, 1, 1.0)]).unwrap();
        let poses = synchronize(&g).unwrap();
        assert_eq!(poses[1], RigidTransform::identity());
        assert!(poses[0].rotation_distance(&g.edges()[0].transform) < 1e-12);
        assert!((poses[0].translation() - g.edges()[0].transform.translation()).norm() < 1e-12);
    }

    #[test]
    fn consistent_graph_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = anchored((0..6).map(|_| random_pose(&mut rng)).collect(), 0);
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push(edge(&gt, i, j, rng.random_range(0.5..2.0)));
            }
        }
        let g = PoseGraph::with_anchor(6, 0, edges).unwrap();
        let poses = synchronize(&g).unwrap();
        for (p, q) in poses.iter().zip(&gt) {
            assert!(p.rotation_distance(q) < 1e-9);
            assert!((p.translation() - q.translation()).norm() < 1e-9);
        }
    }

    #[test]
    fn disconnected_graph_lists_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt: Vec<_> = (0..4).map(|_| random_pose(&mut rng)).collect();
        let g = PoseGraph::with_anchor(4, 0, vec![edge(&gt, 0, 2, 1.0)]).unwrap();
        match synchronize(&g) {
            Err(Error::DisconnectedGraph(c)) => assert_eq!(c, vec![vec![0, 2], vec![1], vec![3]]),
            other => panic!("{other:?}"),
        }
        let (sub, ids) = g.anchor_component();
        assert_eq!(ids, vec![0, 2]);
        assert_eq!(sub.nodes(), 2);
    }

    #[test]
    fn refinement_repairs_a_corrupted_tree_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = anchored((0..3).map(|_| random_pose(&mut rng)).collect(), 0);
        let mut bad = edge(&gt, 1, 2, 0.2);
        let twist = RigidTransform::from_axis_angle(Vec3::z(), 0.3, Vec3::new(0.1, 0.0, 0.0));
        bad.transform = twist.compose(&bad.transform);
        let g = PoseGraph::with_anchor(3, 0, vec![edge(&gt, 0, 1, 1.0), edge(&gt, 0, 2, 1.0), bad]).unwrap();
        // Tree through the corrupt edge: 0-1, then 1-2.
        let init = tree_init(&g, &[0, 2]).unwrap();
        let refined = refine_poses(&g, init.clone(), REFINE_ROUNDS);
        let err = |p: &RigidTransform| p.rotation_distance(&gt[2]);
        assert!(err(&refined[2]) < err(&init[2]));
    }

    #[test]
    fn largest_part_anchors() {
        let g = PoseGraph::from_part_sizes(&[5, 9, 9, 2], Vec::new()).unwrap();
        assert_eq!(g.anchor(), 1);
    }
}
