use serde::{Deserialize, Serialize};

use super::logistic::FittedModel;
use super::ModelError;
use crate::stats::{mean, sample_variance, t_quantile};

/// Rubin-pooled coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledModel {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Mean within-copy variance.
    #[serde(default)]
    pub within: Vec<f64>,
    /// Between-copy variance of the estimates.
    #[serde(default)]
    pub between: Vec<f64>,
    /// `within + (1 + 1/m) * between`.
    #[serde(default)]
    pub total: Vec<f64>,
    #[serde(default)]
    pub m: usize,
}

impl PooledModel {
    pub fn std_errors(&self) -> Vec<f64> {
        self.total.iter().map(|t| t.sqrt()).collect()
    }

    /// Rubin degrees of freedom per coefficient (infinite when `B = 0`).
    pub fn degrees_of_freedom(&self) -> Vec<f64> {
        self.within
            .iter()
            .zip(&self.between)
            .map(|(&w, &b)| rubin_df(w, b, self.m))
            .collect()
    }

    /// Two-sided interval at `level` for coefficient `j`.
    pub fn interval(&self, j: usize, level: f64) -> (f64, f64) {
        let df = rubin_df(self.within[j], self.between[j], self.m);
        let q = t_quantile(0.5 + level / 2.0, df);
        let half = q * self.total[j].sqrt();
        (self.beta[j] - half, self.beta[j] + half)
    }
}

/// `(m - 1) * (1 + W / ((1 + 1/m) B))^2`.
pub fn rubin_df(within: f64, between: f64, m: usize) -> f64 {
    if between <= 0.0 {
        return f64::INFINITY;
    }
    let r = (1.0 + 1.0 / m as f64) * between / within.max(f64::MIN_POSITIVE);
    (m as f64 - 1.0) * (1.0 + 1.0 / r).powi(2)
}

/// Scalar Rubin pooling of per-copy estimates and their variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledScalar {
    pub estimate: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub m: usize,
}

impl PooledScalar {
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let df = rubin_df(self.within, self.between, self.m);
        let half = t_quantile(0.5 + level / 2.0, df) * self.total.sqrt();
        (self.estimate - half, self.estimate + half)
    }
}

pub fn pool_scalar(estimates: &[f64], variances: &[f64]) -> PooledScalar {
    let m = estimates.len();
    let between = sample_variance(estimates);
    let within = if variances.is_empty() { 0.0 } else { mean(variances) };
    PooledScalar {
        estimate: mean(estimates),
        within,
        between,
        total: within + (1.0 + 1.0 / m as f64) * between,
        m,
    }
}

/// A single complete-data fit viewed as a pooled model (`B = 0`).
pub fn pool_single(fit: &FittedModel) -> PooledModel {
    let within = fit.variances();
    PooledModel {
        names: fit.names.clone(),
        beta: fit.coefficients.clone(),
        between: vec![0.0; within.len()],
        total: within.clone(),
        within,
        m: 1,
    }
}

/// Pools `m >= 2` fits sharing the same column names.
pub fn pool_rubin(fits: &[FittedModel]) -> Result<PooledModel, ModelError> {
    let m = fits.len();
    if m < 2 {
        return Err(ModelError::InvalidInput(format!("pooling needs at least 2 fits, got {m}")));
    }
    let names = fits[0].names.clone();
    if let Some(f) = fits.iter().find(|f| f.names != names) {
        return Err(ModelError::MetadataMismatch(format!(
            "columns {:?} differ from {:?}",
            f.names, names
        )));
    }
    let p = names.len();
    let mut pooled = PooledModel {
        names,
        beta: Vec::with_capacity(p),
        within: Vec::with_capacity(p),
        between: Vec::with_capacity(p),
        total: Vec::with_capacity(p),
        m,
    };
    for j in 0..p {
        let est: Vec<f64> = fits.iter().map(|f| f.coefficients[j]).collect();
        let var: Vec<f64> = fits.iter().map(|f| f.covariance[j][j]).collect();
        let s = pool_scalar(&est, &var);
        pooled.beta.push(s.estimate);
        pooled.within.push(s.within);
        pooled.between.push(s.between);
        pooled.total.push(s.total);
    }
    Ok(pooled)
}
