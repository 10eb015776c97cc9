use std::path::Path;

use anyhow::{Context, Result};
use pmtr_core::synth::{generate, FractureSpec};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{write_atomic, write_dir_atomic};

pub fn sample_name(seed: u64) -> String {
    format!("sample_{seed:04}")
}

/// Writes `count` samples with seeds `seed..seed + count` under `out`, plus
/// the resolved config.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.gen.spec.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let base = cfg.gen.spec.seed;
    (0..cfg.gen.count as u64).into_par_iter().try_for_each(|i| -> Result<()> {
        let spec = FractureSpec {
            seed: base + i,
            ..cfg.gen.spec.clone()
        };
        let sample = generate(&spec).with_context(|| format!("generating seed {}", spec.seed))?;
        write_dir_atomic(&out.join(sample_name(spec.seed)), |dir| Ok(sample.write_dir(dir)?))
    })?;
    write_atomic(&out.join("config.json"), cfg.to_json().as_bytes())?;
    log::info!("wrote {} samples to {}", cfg.gen.count, out.display());
    Ok(())
}
