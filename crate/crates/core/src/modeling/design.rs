use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spline::BSplineBasis;
use super::ModelError;
use crate::frame::{AnalysisFrame, ColumnKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LogisticLinear,
    AdditiveSpline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Raw,
    LogContinuous,
    PlusQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplineParams {
    pub basis_size: usize,
    pub penalty_grid: Vec<f64>,
}

impl Default for SplineParams {
    fn default() -> Self {
        SplineParams {
            basis_size: 8,
            penalty_grid: (-2..=4).map(|e| 10f64.powi(e)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub family: Family,
    pub transform: Transform,
    pub predictors: Vec<String>,
    #[serde(default)]
    pub spline: SplineParams,
    /// Added to continuous values before taking logs.
    #[serde(default)]
    pub log_offset: Option<f64>,
}

pub fn default_predictors() -> Vec<String> {
    ["age", "sex", "bmi", "leg_injury", "osteoporosis"]
        .into_iter()
        .map(String::from)
        .collect()
}

impl ModelSpec {
    pub fn new(name: &str, family: Family, transform: Transform, predictors: Vec<String>) -> Self {
        ModelSpec {
            name: name.into(),
            family,
            transform,
            predictors,
            spline: SplineParams::default(),
            log_offset: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.predictors.is_empty() {
            return Err(ModelError::InvalidInput(format!("model '{}' has no predictors", self.name)));
        }
        if self.family == Family::AdditiveSpline && self.transform == Transform::PlusQuadratic {
            return Err(ModelError::InvalidInput(
                "quadratic terms are not combined with spline smooths".into(),
            ));
        }
        if let Some(o) = self.log_offset {
            if !(o >= 0.0 && o.is_finite()) {
                return Err(ModelError::InvalidInput(format!("log offset {o} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Transform complexity used for parsimony tie-breaks.
    pub fn complexity_rank(&self) -> u8 {
        let t = match self.transform {
            Transform::Raw => 0,
            Transform::LogContinuous => 1,
            Transform::PlusQuadratic => 2,
        };
        match self.family {
            Family::LogisticLinear => t,
            Family::AdditiveSpline => 3 + t,
        }
    }
}

/// The five candidate models: logistic (raw, log, quadratic) and additive
/// splines (raw, log).
pub fn default_menu(predictors: &[String]) -> Vec<ModelSpec> {
    let p = predictors.to_vec();
    vec![
        ModelSpec::new("logistic", Family::LogisticLinear, Transform::Raw, p.clone()),
        ModelSpec::new("logistic_log", Family::LogisticLinear, Transform::LogContinuous, p.clone()),
        ModelSpec::new("logistic_quadratic", Family::LogisticLinear, Transform::PlusQuadratic, p.clone()),
        ModelSpec::new("spline", Family::AdditiveSpline, Transform::Raw, p.clone()),
        ModelSpec::new("spline_log", Family::AdditiveSpline, Transform::LogContinuous, p),
    ]
}

/// What a design column is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "term")]
pub enum Term {
    Intercept,
    Linear { variable: String },
    Log { variable: String, offset: f64 },
    Square { variable: String },
    /// `index` of the basis function (the first, 0, is never a column).
    Spline { variable: String, index: usize, log: bool },
    Binary { variable: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(flatten)]
    pub term: Term,
}

/// Everything needed to rebuild a design matrix from raw variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub spec: ModelSpec,
    pub continuous: Vec<String>,
    pub binary: Vec<String>,
    pub columns: Vec<ColumnMeta>,
    pub bases: Vec<BSplineBasis>,
}

impl DesignMeta {
    /// Column layout for `spec`; spline knots come from `training`.
    pub fn new(spec: &ModelSpec, training: &AnalysisFrame) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut continuous = Vec::new();
        let mut binary = Vec::new();
        for v in &spec.predictors {
            match training.column(v)?.kind {
                ColumnKind::Continuous => continuous.push(v.clone()),
                ColumnKind::Binary => binary.push(v.clone()),
            }
        }
        let offset = spec.log_offset.unwrap_or(0.0);
        let log = spec.transform == Transform::LogContinuous;
        let mut columns = vec![ColumnMeta {
            name: "intercept".into(),
            term: Term::Intercept,
        }];
        let mut bases = Vec::new();
        match spec.family {
            Family::LogisticLinear => {
                for v in &continuous {
                    columns.push(if log {
                        ColumnMeta {
                            name: format!("log({v})"),
                            term: Term::Log {
                                variable: v.clone(),
                                offset,
                            },
                        }
                    } else {
                        ColumnMeta {
                            name: v.clone(),
                            term: Term::Linear { variable: v.clone() },
                        }
                    });
                }
                if spec.transform == Transform::PlusQuadratic {
                    for v in &continuous {
                        columns.push(ColumnMeta {
                            name: format!("{v}^2"),
                            term: Term::Square { variable: v.clone() },
                        });
                    }
                }
            }
            Family::AdditiveSpline => {
                for v in &continuous {
                    let raw = training.column(v)?.dense();
                    let vals = raw
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| transformed(v, i, x, log, offset))
                        .collect::<Result<Vec<f64>, _>>()?;
                    let basis = BSplineBasis::from_values(v, &vals, spec.spline.basis_size)?;
                    let label = if log { format!("log({v})") } else { v.clone() };
                    for index in 1..basis.n_basis {
                        columns.push(ColumnMeta {
                            name: format!("s({label})_{index}"),
                            term: Term::Spline {
                                variable: v.clone(),
                                index,
                                log,
                            },
                        });
                    }
                    bases.push(basis);
                }
            }
        }
        for v in &binary {
            columns.push(ColumnMeta {
                name: v.clone(),
                term: Term::Binary { variable: v.clone() },
            });
        }
        Ok(DesignMeta {
            spec: spec.clone(),
            continuous,
            binary,
            columns,
            bases,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.columns.len()
    }

    fn basis(&self, variable: &str) -> &BSplineBasis {
        self.bases
            .iter()
            .find(|b| b.variable == variable)
            .expect("basis recorded for every smooth")
    }

    /// One design row from named raw values.
    pub fn row(&self, values: &BTreeMap<String, f64>, row: usize) -> Result<Vec<f64>, ModelError> {
        let get = |v: &str| {
            values
                .get(v)
                .copied()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ModelError::MissingValue {
                    variable: v.into(),
                    row,
                })
        };
        let mut out = Vec::with_capacity(self.columns.len());
        let mut cached: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for c in &self.columns {
            out.push(match &c.term {
                Term::Intercept => 1.0,
                Term::Linear { variable } | Term::Binary { variable } => get(variable)?,
                Term::Log { variable, offset } => transformed(variable, row, get(variable)?, true, *offset)?,
                Term::Square { variable } => get(variable)?.powi(2),
                Term::Spline { variable, index, log } => {
                    if !cached.contains_key(variable.as_str()) {
                        let offset = self.spec.log_offset.unwrap_or(0.0);
                        let x = transformed(variable, row, get(variable)?, *log, offset)?;
                        cached.insert(variable, self.basis(variable).eval(x));
                    }
                    cached[variable.as_str()][*index]
                }
            });
        }
        Ok(out)
    }

    /// Design matrix for every row of `frame`.
    pub fn matrix(&self, frame: &AnalysisFrame) -> Result<DMatrix<f64>, ModelError> {
        let vars: Vec<&String> = self.continuous.iter().chain(&self.binary).collect();
        let cols = vars
            .iter()
            .map(|v| frame.column(v).map(|c| &c.values))
            .collect::<Result<Vec<_>, _>>()?;
        let n = frame.n_rows();
        let mut x = DMatrix::zeros(n, self.columns.len());
        let mut values = BTreeMap::new();
        for i in 0..n {
            values.clear();
            for (v, col) in vars.iter().zip(&cols) {
                if let Some(val) = col[i] {
                    values.insert((*v).clone(), val);
                }
            }
            let r = self.row(&values, i)?;
            for (j, val) in r.into_iter().enumerate() {
                x[(i, j)] = val;
            }
        }
        Ok(x)
    }

    /// Block-diagonal second-difference penalty, zero outside smooths.
    pub fn penalty(&self) -> DMatrix<f64> {
        let p = self.columns.len();
        let mut m = DMatrix::zeros(p, p);
        for b in &self.bases {
            let first = self
                .columns
                .iter()
                .position(|c| matches!(&c.term, Term::Spline { variable, .. } if *variable == b.variable))
                .expect("smooth has columns");
            let block = b.penalty();
            let k = block.nrows();
            m.view_mut((first, first), (k, k)).copy_from(&block);
        }
        m
    }

    /// Column ranges of each smooth, for inspecting fitted shapes.
    pub fn smooth_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.bases
            .iter()
            .map(|b| {
                let idx: Vec<usize> = self
                    .columns
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| matches!(&c.term, Term::Spline { variable, .. } if *variable == b.variable))
                    .map(|(i, _)| i)
                    .collect();
                (b.variable.clone(), idx[0]..idx[idx.len() - 1] + 1)
            })
            .collect()
    }
}

fn transformed(variable: &str, row: usize, x: f64, log: bool, offset: f64) -> Result<f64, ModelError> {
    if !x.is_finite() {
        return Err(ModelError::MissingValue {
            variable: variable.into(),
            row,
        });
    }
    if !log {
        return Ok(x);
    }
    let shifted = x + offset;
    if shifted <= 0.0 {
        return Err(ModelError::NonPositiveLog {
            variable: variable.into(),
            row,
            value: x,
        });
    }
    Ok(shifted.ln())
}

/// Design matrix and layout for `spec` over `frame`.
pub fn build_design(frame: &AnalysisFrame, spec: &ModelSpec) -> Result<(DMatrix<f64>, DesignMeta), ModelError> {
    let meta = DesignMeta::new(spec, frame)?;
    let x = meta.matrix(frame)?;
    Ok((x, meta))
}
