use nalgebra::DMatrix;
use pmtr_core::hdc::{
    conv2_bruteforce, lemma1_attention_form, theorem1_check, theorem_sweep_config, KernelSpec, Lattice, TheoremConfig,
};
use pmtr_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Offset = [i64; 3];

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_offset(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Offset {
    let mut o = [0i64; 3];
    for (a, d) in o.iter_mut().zip(dims) {
        if d > 1 {
            *a = rng.random_range(-1..=1);
        }
    }
    o
}

fn random_kernel(rng: &mut ChaCha8Rng, dx: [usize; 3], dy: [usize; 3]) -> KernelSpec {
    let mut displacements: Vec<(Offset, Offset)> = Vec::new();
    for _ in 0..rng.random_range(1..8) {
        let d = (random_offset(rng, dx), random_offset(rng, dy));
        if !displacements.contains(&d) {
            displacements.push(d);
        }
    }
    let weights = displacements.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
    let head_map = (0..displacements.len()).collect();
    KernelSpec::new(displacements, weights, head_map).unwrap()
}

/// Zero-padded second-order convolution written from scratch on raw
/// coordinates: out[x][y] = Σ_k w_k ⟨F_X[x + ν_k], F_Y[y + μ_k]⟩.
fn conv_oracle(fx: &DMatrix<f64>, fy: &DMatrix<f64>, dx: [usize; 3], dy: [usize; 3], kernel: &KernelSpec) -> DMatrix<f64> {
    let coords = |dims: [usize; 3]| -> Vec<Offset> {
        let mut v = Vec::new();
        // x varies fastest.
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    v.push([i as i64, j as i64, k as i64]);
                }
            }
        }
        v
    };
    let (cx, cy) = (coords(dx), coords(dy));
    let find = |list: &[Offset], p: Offset| list.iter().position(|q| *q == p);
    let mut out = DMatrix::zeros(cx.len(), cy.len());
    for (x, px) in cx.iter().enumerate() {
        for (y, py) in cy.iter().enumerate() {
            let mut acc = 0.0;
            for ((nu, mu), w) in kernel.displacements.iter().zip(&kernel.weights) {
                let n = find(&cx, [px[0] + nu[0], px[1] + nu[1], px[2] + nu[2]]);
                let m = find(&cy, [py[0] + mu[0], py[1] + mu[1], py[2] + mu[2]]);
                if let (Some(n), Some(m)) = (n, m) {
                    acc += w * fx.row(n).dot(&fy.row(m));
                }
            }
            out[(x, y)] = acc;
        }
    }
    out
}

fn random_dims(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..3)]
}

#[test]
fn bruteforce_matches_the_coordinate_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let (dx, dy) = (random_dims(&mut rng), random_dims(&mut rng));
        let (lx, ly) = (Lattice::new(dx).unwrap(), Lattice::new(dy).unwrap());
        let d = rng.random_range(1..5);
        let fx = random_matrix(&mut rng, lx.len(), d);
        let fy = random_matrix(&mut rng, ly.len(), d);
        let kernel = random_kernel(&mut rng, dx, dy);
        let fast = conv2_bruteforce(&fx, &fy, &lx, &ly, &kernel).unwrap();
        assert!((fast - conv_oracle(&fx, &fy, dx, dy, &kernel)).abs().max() < 1e-12);
    }
}

#[test]
fn attention_form_equals_bruteforce_on_200_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for i in 0..200 {
        let (dx, dy) = (random_dims(&mut rng), random_dims(&mut rng));
        let (lx, ly) = (Lattice::new(dx).unwrap(), Lattice::new(dy).unwrap());
        let d = rng.random_range(1..5);
        let fx = random_matrix(&mut rng, lx.len(), d);
        let fy = random_matrix(&mut rng, ly.len(), d);
        let kernel = random_kernel(&mut rng, dx, dy);
        let a = lemma1_attention_form(&fx, &fy, &lx, &ly, &kernel).unwrap();
        let b = conv2_bruteforce(&fx, &fy, &lx, &ly, &kernel).unwrap();
        assert!((a - b).abs().max() <= 1e-12, "instance {i}");
    }
}

#[test]
fn equivalence_holds_across_the_seed_sweep() {
    for seed in 0..50 {
        let cfg = theorem_sweep_config(seed, None).unwrap();
        assert!(cfg.kernel.heads() <= 25);
        assert!((4..=8).contains(&cfg.lattice_x.len()));
        let report = theorem1_check(&cfg).unwrap();
        assert_eq!(report.dims.d_proxy, report.dims.heads * report.dims.d_emb);
        assert!(report.max_abs_err < 1e-6, "seed {seed}: {}", report.max_abs_err);
    }
}

#[test]
fn narrow_proxy_is_a_clean_error() {
    let cfg = theorem_sweep_config(3, Some(2)).unwrap();
    let narrow = TheoremConfig {
        d_proxy: Some(cfg.kernel.heads() * 2 - 1),
        ..cfg
    };
    assert!(matches!(theorem1_check(&narrow), Err(Error::InfeasibleProxyDims { .. })));
}
