//! Scoring single patients, by default with the published final model.

use std::collections::BTreeMap;
use std::path::Path;

use framr_core::frame::{AnalysisFrame, ColumnKind};
use framr_core::modeling::{default_predictors, DesignMeta, Family, ModelFile, ModelSpec, PooledModel, Transform};

use crate::error::CliError;

pub const PAPER_MODEL_JSON: &str = include_str!("../assets/paper_model.json");

/// Published coefficients, in design-column order.
pub const PAPER_COEFFICIENTS: [(&str, f64); 6] = [
    ("intercept", -5.29),
    ("age", 0.04),
    ("bmi", 0.02),
    ("sex", 0.14),
    ("leg_injury", 0.36),
    ("osteoporosis", 0.60),
];

/// The published model built in code; the bundled JSON must match it.
pub fn published_model() -> ModelFile {
    let mut layout = AnalysisFrame::new(vec!["x".into()]);
    for v in default_predictors() {
        let kind = if v == "age" || v == "bmi" {
            ColumnKind::Continuous
        } else {
            ColumnKind::Binary
        };
        layout.push_column(&v, kind, vec![Some(1.0)]).expect("distinct names");
    }
    let spec = ModelSpec::new("logistic", Family::LogisticLinear, Transform::Raw, default_predictors());
    let design = DesignMeta::new(&spec, &layout).expect("plain logistic layout");
    let model = PooledModel {
        names: PAPER_COEFFICIENTS.iter().map(|(n, _)| n.to_string()).collect(),
        beta: PAPER_COEFFICIENTS.iter().map(|(_, b)| *b).collect(),
        within: Vec::new(),
        between: Vec::new(),
        total: Vec::new(),
        m: 0,
    };
    let mut f = ModelFile::new(design, None, model).expect("names match the layout");
    f.note = Some("Published final osteoarthritis model; standard errors were not reported.".into());
    f
}

pub fn bundled_model() -> ModelFile {
    ModelFile::from_json(PAPER_MODEL_JSON).expect("bundled model is valid")
}

pub fn load_model(path: Option<&Path>) -> Result<ModelFile, CliError> {
    match path {
        Some(p) => ModelFile::load(p).map_err(|e| CliError::Data(e.to_string())),
        None => Ok(bundled_model()),
    }
}

/// Parses one covariate value. Sex takes female/male, flags take
/// yes/no/true/false, everything takes numbers.
pub fn parse_value(name: &str, text: &str) -> Result<f64, CliError> {
    let t = text.trim().to_ascii_lowercase();
    let word = match (name, t.as_str()) {
        ("sex", "female" | "f") => Some(1.0),
        ("sex", "male" | "m") => Some(0.0),
        (_, "yes" | "true") => Some(1.0),
        (_, "no" | "false") => Some(0.0),
        _ => None,
    };
    match word {
        Some(v) => Ok(v),
        None => t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Usage(format!("cannot read '{text}' as a value for '{name}'"))),
    }
}

/// Builds a record from `name=value` pairs.
pub fn parse_assignments(pairs: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut rec = BTreeMap::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected name=value, got '{p}'")))?;
        let k = k.trim().to_string();
        rec.insert(k.clone(), parse_value(&k, v)?);
    }
    Ok(rec)
}

/// Reads a JSON object of covariates; strings go through `parse_value`.
pub fn read_record(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let obj: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    obj.into_iter()
        .map(|(k, v)| {
            let x = match &v {
                serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                serde_json::Value::Bool(b) => f64::from(u8::from(*b)),
                serde_json::Value::String(s) => parse_value(&k, s)?,
                _ => return Err(CliError::Data(format!("'{k}' must be a number, flag or string"))),
            };
            Ok((k, x))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_json_matches_published_coefficients() {
        assert_eq!(bundled_model(), published_model());
    }

    #[test]
    fn values() {
        assert_eq!(parse_value("sex", "Female").unwrap(), 1.0);
        assert_eq!(parse_value("sex", "m").unwrap(), 0.0);
        assert_eq!(parse_value("leg_injury", "yes").unwrap(), 1.0);
        assert_eq!(parse_value("bmi", "28.5").unwrap(), 28.5);
        assert!(parse_value("bmi", "tall").is_err());
        assert!(parse_assignments(&["age".into()]).is_err());
    }
}
