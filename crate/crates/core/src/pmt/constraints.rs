use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ProxySet;
use crate::error::{Error, Result};

/// Multipliers on the two constraint terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintWeights {
    pub orth: f64,
    pub zero: f64,
}

impl Default for ConstraintWeights {
    fn default() -> Self {
        Self { orth: 1.0, zero: 1.0 }
    }
}

/// Orthonormality residual `Σ_i ‖P_iᵀP_i − I‖²_F` and cross-head residual
/// `Σ_{i<j} ‖P_iᵀP_j‖²_F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLoss {
    pub orth: f64,
    pub zero: f64,
    pub weights: ConstraintWeights,
}

impl ConstraintLoss {
    pub fn total(&self) -> f64 {
        self.weights.orth * self.orth + self.weights.zero * self.zero
    }
}

pub fn constraint_losses(p: &ProxySet) -> ConstraintLoss {
    constraint_losses_weighted(p, ConstraintWeights::default())
}

pub fn constraint_losses_weighted(p: &ProxySet, weights: ConstraintWeights) -> ConstraintLoss {
    let ps = p.proxies();
    let d = p.d_emb();
    let mut orth = 0.0;
    let mut zero = 0.0;
    for (i, pi) in ps.iter().enumerate() {
        let mut gram = pi.tr_mul(pi);
        for k in 0..d {
            gram[(k, k)] -= 1.0;
        }
        orth += gram.norm_squared();
        for pj in &ps[i + 1..] {
            zero += pi.tr_mul(pj).norm_squared();
        }
    }
    ConstraintLoss { orth, zero, weights }
}

/// Gradient of the weighted constraint loss with respect to every proxy.
pub fn constraint_grad(p: &ProxySet, weights: ConstraintWeights) -> Vec<DMatrix<f64>> {
    let ps = p.proxies();
    let d = p.d_emb();
    let mut grads: Vec<DMatrix<f64>> = ps
        .iter()
        .map(|pi| {
            let mut gram = pi.tr_mul(pi);
            for k in 0..d {
                gram[(k, k)] -= 1.0;
            }
            pi * gram * (4.0 * weights.orth)
        })
        .collect();
    if weights.zero != 0.0 {
        for i in 0..ps.len() {
            for j in i + 1..ps.len() {
                let cross = ps[i].tr_mul(&ps[j]);
                grads[i] += &ps[j] * cross.transpose() * (2.0 * weights.zero);
                grads[j] += &ps[i] * cross * (2.0 * weights.zero);
            }
        }
    }
    grads
}

/// Result of [`fit_proxies`]: the fitted set and the combined loss before
/// the first step and after every step.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub proxies: ProxySet,
    pub trace: Vec<f64>,
}

const MAX_HALVINGS: usize = 60;
const STEP_GROWTH: f64 = 1.2;

/// Gradient descent on the combined constraint loss. A step that would
/// increase the loss is halved until it does not, so the trace never rises.
pub fn fit_proxies(p: &ProxySet, steps: usize, step_size: f64) -> Result<FitResult> {
    fit_proxies_weighted(p, steps, step_size, ConstraintWeights::default())
}

pub fn fit_proxies_weighted(
    p: &ProxySet,
    steps: usize,
    step_size: f64,
    weights: ConstraintWeights,
) -> Result<FitResult> {
    if steps == 0 {
        return Err(Error::InvalidArgument("fit_proxies needs at least one step".into()));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let mut current = p.clone();
    let mut loss = constraint_losses_weighted(&current, weights).total();
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(loss);
    let mut eta = step_size;
    for _ in 0..steps {
        let grads = constraint_grad(&current, weights);
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let moved: Vec<DMatrix<f64>> = current
                .proxies()
                .iter()
                .zip(&grads)
                .map(|(pi, g)| pi - g * eta)
                .collect();
            let candidate = current.with_proxies(moved)?;
            let candidate_loss = constraint_losses_weighted(&candidate, weights).total();
            if candidate_loss <= loss {
                current = candidate;
                loss = candidate_loss;
                accepted = true;
                eta = (eta * STEP_GROWTH).min(step_size * 4.0);
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            eta = step_size;
        }
        trace.push(loss);
    }
    Ok(FitResult {
        proxies: current,
        trace,
    })
}
