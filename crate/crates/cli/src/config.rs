use std::path::Path;

use anyhow::{Context, Result};
use pmtr_core::scaling::ScalingConfig;
use pmtr_core::synth::FractureSpec;
use pmtr_core::AssemblyConfig;
use serde::{Deserialize, Serialize};

/// Everything a run depends on: the config file merged with flag overrides.
/// Unknown keys are rejected at every level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed, copied into every seeded component when resolved.
    pub seed: u64,
    pub gen: GenConfig,
    pub assembly: AssemblyConfig,
    pub theorem: TheoremSweep,
    pub bench: ScalingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Samples per run; sample `i` uses seed `seed + i`.
    pub count: usize,
    pub spec: FractureSpec,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            count: 1,
            spec: FractureSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremSweep {
    pub seeds: usize,
    /// Random 2 or 4 per seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_emb: Option<usize>,
    /// `heads · D_emb` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_proxy: Option<usize>,
    /// Random `ε_X · ε_Y ≤ 25` per seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,
    pub tolerance: f64,
}

impl Default for TheoremSweep {
    fn default() -> Self {
        Self {
            seeds: 50,
            d_emb: None,
            d_proxy: None,
            heads: None,
            tolerance: 1e-6,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies the global seed override and propagates the seed.
    pub fn resolve_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.gen.spec.seed = self.seed;
        self.assembly.matcher.seed = self.seed;
        self.assembly.estimator.seed = self.seed;
        self.bench.seed = self.seed;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn nested_overrides_parse() {
        let cfg: RunConfig = toml::from_str(
            "seed = 4\n[gen]\ncount = 3\n[gen.spec]\nparts = 5\n[assembly.matcher]\nk = 64\n[bench]\nmem_cap = 1024\n",
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.gen.count, cfg.gen.spec.parts), (4, 3, 5));
        assert_eq!((cfg.assembly.matcher.k, cfg.bench.mem_cap), (64, 1024));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[assembly.matcher]\nkk = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[bench]\nsizes = [1]").is_err());
    }

    #[test]
    fn seed_reaches_every_component() {
        let mut cfg = RunConfig::default();
        cfg.resolve_seed(Some(9));
        assert_eq!(cfg.gen.spec.seed, 9);
        assert_eq!(cfg.assembly.matcher.seed, 9);
        assert_eq!(cfg.assembly.estimator.seed, 9);
        assert_eq!(cfg.bench.seed, 9);
    }
}
