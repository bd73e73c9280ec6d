//! Pipeline configuration and seed derivation.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use framr_core::cohort::CohortConfig;
use framr_core::evaluation::PartitionSpec;
use framr_core::imputation::{ImputationConfig, SimulationConfig};
use framr_core::modeling::{default_menu, default_predictors, ModelSpec, SelectOptions};
use framr_core::synth::GeneratorConfig;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Detectable AUC behind the minimum split-size warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeGuidance {
    pub alt_auc: f64,
    pub alpha: f64,
    pub power: f64,
    pub kappa: f64,
}

impl Default for SizeGuidance {
    fn default() -> Self {
        SizeGuidance {
            alt_auc: 0.55,
            alpha: 0.05,
            power: 0.8,
            kappa: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Existing extract. When absent, `run-all` generates one.
    pub data_dir: Option<PathBuf>,
    /// Definition file; the bundled set when absent.
    pub definitions: Option<PathBuf>,
    /// JSON list of `{target, min, max}`; the default rules when absent.
    pub plausibility_rules: Option<PathBuf>,
    /// Reference date for the birth-year rule and the currency check.
    /// Defaults to the newest record in the extract.
    pub as_of: Option<NaiveDate>,
    pub max_staleness_days: i64,
    pub out_dir: PathBuf,
    pub generator: GeneratorConfig,
    pub cohort: CohortConfig,
    pub imputation: ImputationConfig,
    pub candidates: Vec<ModelSpec>,
    pub partition: PartitionSpec,
    pub select: SelectOptions,
    pub guidance: SizeGuidance,
    pub simulation: SimulationConfig,
    /// Also run the missingness simulation in `run-all`.
    pub run_simulation: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 20_160_121,
            data_dir: None,
            definitions: None,
            plausibility_rules: None,
            as_of: None,
            max_staleness_days: 365,
            out_dir: PathBuf::from("framr_out"),
            generator: GeneratorConfig::default(),
            cohort: CohortConfig::default(),
            imputation: ImputationConfig::default(),
            candidates: default_menu(&default_predictors()),
            partition: PartitionSpec::default(),
            select: SelectOptions::default(),
            guidance: SizeGuidance::default(),
            simulation: SimulationConfig::default(),
            run_simulation: false,
        }
    }
}

/// Seeds handed to each stage, drawn in this field order from a ChaCha
/// stream keyed by the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub generator: u64,
    pub partition: u64,
    pub imputation: u64,
    pub simulation: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        StageSeeds {
            master,
            generator: rng.next_u64(),
            partition: rng.next_u64(),
            imputation: rng.next_u64(),
            simulation: rng.next_u64(),
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data_dir, &mut cfg.definitions, &mut cfg.plausibility_rules]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::derive(self.seed)
    }

    /// Copies the derived seeds into the stage configs.
    pub fn apply_seeds(&mut self) {
        let s = self.seeds();
        self.generator.seed = s.generator;
        self.partition.seed = s.partition;
        self.imputation.seed = s.imputation;
        self.simulation.imputation.seed = s.simulation;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.generator.validate()?;
        self.cohort.validate()?;
        self.imputation.validate()?;
        self.partition
            .validate()
            .map_err(|e| CliError::Config(format!("partition: {e}")))?;
        if self.candidates.is_empty() {
            return Err(CliError::Config("no candidate models".into()));
        }
        for c in &self.candidates {
            c.validate().map_err(|e| CliError::Config(format!("candidate '{}': {e}", c.name)))?;
        }
        for p in [&self.data_dir, &self.definitions, &self.plausibility_rules].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the serialized config, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = StageSeeds::derive(7);
        assert_eq!(a, StageSeeds::derive(7));
        assert_ne!(a, StageSeeds::derive(8));
        let all = [a.generator, a.partition, a.imputation, a.simulation];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn empty_json_is_default() {
        let c: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.candidates.len(), 5);
    }
}
