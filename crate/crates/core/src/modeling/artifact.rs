use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::design::DesignMeta;
use super::pool::PooledModel;
use super::ModelError;
use crate::stats::inv_logit;

pub const SEX_CODING: &str = "sex: female = 1, male = 0";

fn default_sex_coding() -> String {
    SEX_CODING.into()
}

fn default_ranges() -> BTreeMap<String, (f64, f64)> {
    BTreeMap::from([("age".into(), (0.0, 120.0)), ("bmi".into(), (10.0, 100.0))])
}

/// The `model.json` artifact: design layout plus pooled coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "default_sex_coding")]
    pub sex_coding: String,
    pub design: DesignMeta,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub model: PooledModel,
    /// Plausible input ranges; values outside only warn.
    #[serde(default = "default_ranges")]
    pub ranges: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub linear_predictor: f64,
    pub probability: f64,
    pub warnings: Vec<String>,
}

impl ModelFile {
    pub fn new(design: DesignMeta, lambda: Option<f64>, model: PooledModel) -> Result<Self, ModelError> {
        let f = ModelFile {
            sex_coding: default_sex_coding(),
            design,
            lambda,
            model,
            ranges: default_ranges(),
            note: None,
        };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<(), ModelError> {
        let names = self.design.names();
        if names != self.model.names || self.model.beta.len() != names.len() {
            return Err(ModelError::MetadataMismatch(format!(
                "coefficients {:?} do not match design columns {:?}",
                self.model.names, names
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let f: ModelFile =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidInput(format!("model file: {e}")))?;
        f.check()?;
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| ModelError::InvalidInput(format!("{}: {e}", path.display())))
    }

    /// Variables a record must supply.
    pub fn covariates(&self) -> Vec<String> {
        self.design.continuous.iter().chain(&self.design.binary).cloned().collect()
    }

    /// Risk for one record of raw covariate values.
    pub fn score(&self, record: &BTreeMap<String, f64>) -> Result<RiskScore, ModelError> {
        let mut warnings = Vec::new();
        for v in &self.design.continuous {
            if let (Some(x), Some((lo, hi))) = (record.get(v), self.ranges.get(v)) {
                if x < lo || x > hi {
                    warnings.push(format!("{v} = {x} is outside the plausible range [{lo}, {hi}]"));
                }
            }
        }
        for v in &self.design.binary {
            if let Some(x) = record.get(v) {
                if *x != 0.0 && *x != 1.0 {
                    warnings.push(format!("{v} = {x} is not 0 or 1"));
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let row = self.design.row(record, 0)?;
        let lp: f64 = row.iter().zip(&self.model.beta).map(|(a, b)| a * b).sum();
        Ok(RiskScore {
            linear_predictor: lp,
            probability: inv_logit(lp),
            warnings,
        })
    }
}
