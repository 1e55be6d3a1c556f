//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clinproj::constraints::{standard_registry, VitalRegistry};
use clinproj::datagen::{CohortSpec, CorruptionRates, CorruptionSpec, SicknessModel};
use clinproj::preprocess::ScoreConfig;
use clinproj::projection::SolverOptions;
use clinproj_ml::PipelineParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub hours_min: usize,
    pub hours_max: usize,
    pub sepsis_rate: f64,
    pub sickness: SicknessModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_patients: 500, hours_min: 24, hours_max: 48, sepsis_rate: 0.3, sickness: SicknessModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub out_of_range: f64,
    pub rate_spike: f64,
    pub missing: f64,
    pub logical_pair: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self { out_of_range: 0.002, rate_spike: 0.002, missing: 0.05, logical_pair: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Vital table CSV; the built-in table when absent.
    pub registry: Option<PathBuf>,
    /// Severity score TOML; the built-in scores when absent.
    pub scores: Option<PathBuf>,
    pub seed: u64,
    pub window: usize,
    pub stride: usize,
    pub split_ratio: f64,
    pub solver: SolverOptions,
    pub ml: PipelineParams,
    pub synth: SynthConfig,
    pub corruption: CorruptionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            registry: None,
            scores: None,
            seed: 0,
            window: 6,
            stride: 3,
            split_ratio: 0.75,
            solver: SolverOptions::default(),
            ml: PipelineParams::default(),
            synth: SynthConfig::default(),
            corruption: CorruptionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > self.stride && self.stride > 0) {
            bail!("need window > stride > 0, got window {} and stride {}", self.window, self.stride);
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            bail!("split_ratio must lie in (0, 1)");
        }
        if self.ml.k == 0 {
            bail!("need at least one cluster");
        }
        for p in self.registry.iter().chain(&self.scores) {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<VitalRegistry> {
        match &self.registry {
            Some(p) => VitalRegistry::from_path(p).with_context(|| format!("loading registry {}", p.display())),
            None => Ok(standard_registry()),
        }
    }

    pub fn score_config(&self) -> Result<ScoreConfig> {
        match &self.scores {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ScoreConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))
            }
            None => Ok(ScoreConfig::standard()),
        }
    }

    pub fn cohort_spec(&self) -> CohortSpec {
        let s = &self.synth;
        let mut spec = CohortSpec::new(s.n_patients, (s.hours_min, s.hours_max), s.sepsis_rate, self.seed);
        spec.sickness = s.sickness.clone();
        spec
    }

    pub fn corruption_spec(&self, n_vitals: usize) -> CorruptionSpec {
        let c = &self.corruption;
        let rates = CorruptionRates { out_of_range: c.out_of_range, rate_spike: c.rate_spike, missing: c.missing };
        CorruptionSpec::uniform(n_vitals, rates, c.logical_pair, self.seed)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}
