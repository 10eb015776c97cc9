use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + values.map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Entropic optimal transport on an `m × n` score matrix augmented with a
/// dustbin row and column.
///
/// Logits are `score / temperature` (dustbin entries use `dustbin /
/// temperature`). Row marginals are `[1; m]` plus `n` for the dustbin row,
/// column marginals `[1; n]` plus `m`, so both sides carry mass `m + n`.
/// Iterates in the log domain and returns the `(m+1) × (n+1)` plan.
pub fn sinkhorn_ot(scores: &DMatrix<f64>, dustbin: f64, temperature: f64, iterations: usize) -> Result<DMatrix<f64>> {
    if scores.iter().any(|v| v.is_nan()) || !dustbin.is_finite() {
        return Err(Error::NonFinite("sinkhorn scores"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument("sinkhorn temperature must be positive".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("sinkhorn needs at least one iteration".into()));
    }
    let (m, n) = scores.shape();
    let dust = dustbin / temperature;
    let logits = DMatrix::from_fn(m + 1, n + 1, |i, j| {
        if i < m && j < n {
            scores[(i, j)] / temperature
        } else {
            dust
        }
    });
    let log_a: Vec<f64> = (0..=m).map(|i| if i < m { 0.0 } else { (n.max(1) as f64).ln() }).collect();
    let log_b: Vec<f64> = (0..=n).map(|j| if j < n { 0.0 } else { (m.max(1) as f64).ln() }).collect();
    // An empty side leaves a single dustbin cell whose mass is pinned by
    // the other side's marginal.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; n + 1];
    for _ in 0..iterations {
        for i in 0..=m {
            let row = (0..=n).map(|j| logits[(i, j)] + v[j]);
            u[i] = log_a[i] - log_sum_exp(row);
        }
        for j in 0..=n {
            let col = (0..=m).map(|i| logits[(i, j)] + u[i]);
            v[j] = log_b[j] - log_sum_exp(col);
        }
    }
    Ok(DMatrix::from_fn(m + 1, n + 1, |i, j| (logits[(i, j)] + u[i] + v[j]).exp()))
}

/// Largest absolute deviation of the plan's row and column sums from the
/// prescribed marginals.
pub fn marginal_violation(plan: &DMatrix<f64>) -> f64 {
    let (rows, cols) = plan.shape();
    let (m, n) = (rows - 1, cols - 1);
    let row_target = |i: usize| if i < m { 1.0 } else { n as f64 };
    let col_target = |j: usize| if j < n { 1.0 } else { m as f64 };
    let rows_err = (0..rows).map(|i| (plan.row(i).sum() - row_target(i)).abs());
    let cols_err = (0..cols).map(|j| (plan.column(j).sum() - col_target(j)).abs());
    rows_err.chain(cols_err).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn strong_single_pair_takes_the_mass() {
        let plan = sinkhorn_ot(&DMatrix::from_element(1, 1, 5.0), 1.0, 0.1, 100).unwrap();
        assert!(plan[(0, 0)] > 0.9, "{plan}");
    }

    #[test]
    fn symmetric_scores_give_symmetric_plan() {
        let s = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.2, 0.9]);
        let plan = sinkhorn_ot(&s, 1.0, 0.1, 100).unwrap();
        assert!((plan.clone() - plan.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn marginals_hold_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = DMatrix::from_fn(50, 50, |_, _| rng.random::<f64>());
        let plan = sinkhorn_ot(&s, 1.0, 0.1, 100).unwrap();
        assert!(marginal_violation(&plan) < 1e-6);
    }

    #[test]
    fn nan_scores_rejected() {
        let s = DMatrix::from_element(2, 2, f64::NAN);
        assert!(sinkhorn_ot(&s, 1.0, 0.1, 10).is_err());
    }

    #[test]
    fn uniform_scores_give_the_chance_plan() {
        let (m, n) = (3, 5);
        let plan = sinkhorn_ot(&DMatrix::from_element(m, n, 1.0), 1.0, 0.1, 200).unwrap();
        let chance = 1.0 / (m + n) as f64;
        assert!((plan[(1, 2)] - chance).abs() < 1e-9);
    }
}
