use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use pmtr_core::hdc::{theorem1_check, theorem_sweep_config_with, TheoremReport};
use serde::Serialize;

use crate::config::{RunConfig, TheoremSweep};
use crate::output::emit;

#[derive(Serialize)]
struct Sweep<'a> {
    config: &'a TheoremSweep,
    first_seed: u64,
    max_abs_err: f64,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_ms: Option<f64>,
    seeds: Vec<TheoremReport>,
}

/// Runs the equivalence check over the seed sweep and writes the JSON
/// report. Returns whether every seed stayed within tolerance.
pub fn run(cfg: &RunConfig, out: Option<&Path>, omit_timing: bool) -> Result<bool> {
    let sweep = &cfg.theorem;
    let start = Instant::now();
    let mut seeds = Vec::with_capacity(sweep.seeds);
    for seed in cfg.seed..cfg.seed + sweep.seeds as u64 {
        let mut tc = theorem_sweep_config_with(seed, sweep.d_emb, sweep.heads)?;
        tc.d_proxy = sweep.d_proxy;
        let mut report = theorem1_check(&tc).with_context(|| format!("seed {seed}"))?;
        if omit_timing {
            report.elapsed_ms = None;
        }
        seeds.push(report);
    }
    let max_abs_err = seeds.iter().map(|r| r.max_abs_err).fold(0.0, f64::max);
    let passed = seeds.iter().all(|r| r.max_abs_err <= sweep.tolerance);
    let report = Sweep {
        config: sweep,
        first_seed: cfg.seed,
        max_abs_err,
        passed,
        elapsed_ms: (!omit_timing).then(|| start.elapsed().as_secs_f64() * 1e3),
        seeds,
    };
    emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if !passed {
        log::error!("max error {max_abs_err:e} exceeds tolerance {:e}", sweep.tolerance);
    }
    Ok(passed)
}
