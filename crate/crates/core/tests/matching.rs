use nalgebra::DMatrix;
use pmtr_core::assembly::estimate_transform;
use pmtr_core::features::{build_pyramid, PyramidConfig};
use pmtr_core::matcher::{group_point_to_node, match_pair, topk_matches, MatchConfig, MatcherModel};
use pmtr_core::synth::{generate, FractureSpec};
use pmtr_core::PointCloud;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn part(seed: u64) -> PointCloud {
    let sample = generate(&FractureSpec {
        seed,
        ..FractureSpec::default()
    })
    .unwrap();
    sample.parts[sample.anchor].clone()
}

/// Neighboring fine points carry nearly identical local features, so the
/// entropic plan splits mass between a point and its immediate neighbors.
/// Pairs must still land on or next to their source, and the consensus fit
/// must return the identity.
#[test]
fn duplicated_cloud_matches_itself() {
    let cfg = MatchConfig::default();
    let model = MatcherModel::new(&cfg).unwrap();
    let cell = cfg.pyramid.base_cell;
    for seed in [0, 1] {
        let x = part(seed);
        let corr = match_pair(&x, &x, &model, &cfg).unwrap();
        let n = corr.len();
        let own = corr.pairs.iter().filter(|c| c.src_index == c.dst_index).count();
        let near = corr.pairs.iter().filter(|c| (c.src_point() - c.dst_point()).norm() <= cell).count();
        assert!(own * 10 >= n * 7, "seed {seed}: {own}/{n} self-pairs");
        assert!(near * 10 >= n * 9, "seed {seed}: {near}/{n} within one cell");
        assert!(corr.pairs.iter().all(|c| c.w > 0.0 && c.w <= 1.0));
        let t = estimate_transform(&corr, 64).unwrap();
        assert!(t.angle() < 1e-2 && t.translation().norm() < cell, "seed {seed}: {t:?}");
    }
}

#[test]
fn matching_is_deterministic() {
    let cfg = MatchConfig {
        complementary: true,
        ..MatchConfig::default()
    };
    let sample = generate(&FractureSpec::default()).unwrap();
    let run = || {
        let model = MatcherModel::new(&cfg).unwrap();
        match_pair(&sample.parts[0], &sample.parts[1], &model, &cfg).unwrap().to_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn every_fine_point_has_one_coarse_group() {
    let x = part(2);
    let pyr = build_pyramid(&x, &PyramidConfig::default()).unwrap();
    let groups = group_point_to_node(&pyr.coarse_ancestors(), pyr.sizes()[0]).unwrap();
    assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), x.len());
    let mut seen = vec![false; x.len()];
    for g in &groups {
        for &i in g {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topk_agrees_with_a_full_sort(rows in 1usize..40, cols in 1usize..40, k in 1usize..60, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Coarse grid values force plenty of ties.
        let scores = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(0..8) as f64 / 8.0);
        let fast = topk_matches(&scores, k);
        let mut all: Vec<(usize, usize, f64)> =
            (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| (i, j, scores[(i, j)])).collect();
        all.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        prop_assert_eq!(fast.len(), k.min(rows * cols));
        for (m, (i, j, s)) in fast.iter().zip(&all) {
            prop_assert_eq!((m.x, m.y, m.score), (*i, *j, *s));
        }
    }
}
