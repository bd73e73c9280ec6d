use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::stats::inv_logit;

/// IRLS controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest coefficient magnitude, on the internally standardized scale,
    /// before the fit is reported as separated.
    pub separation_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 50,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            separation_threshold: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Row-major `p x p`.
    pub covariance: Vec<Vec<f64>>,
    /// `-2 log L` without the penalty term.
    pub deviance: f64,
    pub iterations: usize,
    /// Ridge weight when the fit was penalized.
    pub lambda: Option<f64>,
}

impl FittedModel {
    pub fn variances(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.covariance[j][j]).collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.variances().into_iter().map(f64::sqrt).collect()
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli deviance of linear predictors `eta`.
pub fn deviance(eta: &[f64], y: &[f64]) -> f64 {
    2.0 * eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| yi * softplus(-e) + (1.0 - yi) * softplus(e))
        .sum::<f64>()
}

/// Affine map between the caller's columns and centered, unit-variance
/// columns: `beta = a * beta_std`.
struct Standardizer {
    a: DMatrix<f64>,
    xs: DMatrix<f64>,
    intercept: Option<usize>,
}

fn standardize(x: &DMatrix<f64>, names: &[String]) -> Result<Standardizer, ModelError> {
    let (n, p) = x.shape();
    let mut intercept = None;
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var <= 1e-24 * (1.0 + mean * mean) {
            if intercept.is_none() && mean != 0.0 {
                intercept = Some(j);
                scale[j] = mean;
            } else {
                return Err(ModelError::RankDeficient(format!("column '{}' is constant", names[j])));
            }
        } else {
            center[j] = mean;
            scale[j] = var.sqrt();
        }
    }
    let mut xs = x.clone();
    let mut a = DMatrix::zeros(p, p);
    for j in 0..p {
        a[(j, j)] = 1.0 / scale[j];
        if Some(j) == intercept {
            xs.column_mut(j).fill(1.0);
            continue;
        }
        let c = if intercept.is_some() { center[j] } else { 0.0 };
        for v in xs.column_mut(j).iter_mut() {
            *v = (*v - c) / scale[j];
        }
        if let Some(k) = intercept {
            a[(k, j)] = -c / scale[j] / scale[k];
        }
    }
    Ok(Standardizer { a, xs, intercept })
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<(), ModelError> {
    let (n, p) = x.shape();
    if names.len() != p {
        return Err(ModelError::InvalidInput(format!("{} names for {} columns", names.len(), p)));
    }
    if y.len() != n {
        return Err(ModelError::InvalidInput(format!("{} outcomes for {} rows", y.len(), n)));
    }
    if n <= p {
        return Err(ModelError::InvalidInput(format!("{n} rows for {p} columns")));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(ModelError::InvalidInput("outcome must be 0 or 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidInput("design matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Penalized information matrix and score at `beta`.
fn newton_system(
    xs: &DMatrix<f64>,
    y: &[f64],
    beta: &DVector<f64>,
    eta: &DVector<f64>,
    penalty: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let (n, p) = xs.shape();
    let mu: Vec<f64> = eta.iter().map(|&e| inv_logit(e)).collect();
    let mut xw = xs.clone();
    for (i, m) in mu.iter().enumerate() {
        let s = (m * (1.0 - m)).max(1e-12).sqrt();
        for j in 0..p {
            xw[(i, j)] *= s;
        }
    }
    let mut h = xw.tr_mul(&xw);
    let resid = DVector::from_iterator(n, y.iter().zip(&mu).map(|(yi, mi)| yi - mi));
    let mut grad = xs.tr_mul(&resid);
    if let Some(m) = penalty {
        h += m;
        grad -= m * beta;
    }
    (h, grad)
}

/// Maximum-likelihood logistic regression by IRLS.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], names: &[String], opts: &FitOptions) -> Result<FittedModel, ModelError> {
    fit_penalized(x, y, names, None, opts)
}

/// Logistic regression maximizing `log L - beta' P beta / 2` for an optional
/// penalty matrix `P` on the caller's scale.
pub fn fit_penalized(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    penalty: Option<(&DMatrix<f64>, f64)>,
    opts: &FitOptions,
) -> Result<FittedModel, ModelError> {
    check_inputs(x, y, names)?;
    let (n, p) = x.shape();
    let st = standardize(x, names)?;
    let ps = penalty.map(|(pm, lambda)| st.a.transpose() * pm * &st.a * lambda);

    let gram = st.xs.tr_mul(&st.xs) / n as f64;
    let eig = gram.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if ps.is_none() && lo <= 1e-10 * hi {
        return Err(ModelError::RankDeficient(format!(
            "design columns {:?} are linearly dependent",
            names
        )));
    }

    let mut beta = DVector::zeros(p);
    if let Some(k) = st.intercept {
        let ybar = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        beta[k] = (ybar / (1.0 - ybar)).ln();
    }
    let objective = |beta: &DVector<f64>| -> (f64, DVector<f64>) {
        let eta = &st.xs * beta;
        let dev = deviance(eta.as_slice(), y);
        let pen = ps.as_ref().map(|m| (beta.transpose() * m * beta)[(0, 0)]).unwrap_or(0.0);
        (dev + pen, eta)
    };
    let (mut obj, mut eta) = objective(&beta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let (h, grad) = newton_system(&st.xs, y, &beta, &eta, ps.as_ref());
        let Some(chol) = h.cholesky() else {
            return Err(ModelError::RankDeficient("information matrix is singular".into()));
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let (new_beta, new_obj, new_eta) = loop {
            let cand = &beta + &step * t;
            let (o, e) = objective(&cand);
            if o <= obj + 1e-12 * obj.abs().max(1.0) || t < 1e-4 {
                break (cand, o, e);
            }
            t *= 0.5;
        };
        let change = (obj - new_obj).abs();
        beta = new_beta;
        eta = new_eta;
        let old = obj;
        obj = new_obj;
        if let Some(j) = (0..p).find(|&j| beta[j].abs() > opts.separation_threshold) {
            return Err(ModelError::Separation {
                column: names[j].clone(),
            });
        }
        if change < opts.abs_tol || change < opts.rel_tol * old.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ModelError::NonConvergence { iterations });
    }
    // The deviance test stops one step early relative to the score; two
    // plain Newton steps settle the gradient.
    for _ in 0..2 {
        let (h, grad) = newton_system(&st.xs, y, &beta, &eta, ps.as_ref());
        let Some(chol) = h.cholesky() else { break };
        let cand = &beta + chol.solve(&grad);
        let (o, e) = objective(&cand);
        if o > obj + 1e-9 * obj.abs().max(1.0) {
            break;
        }
        beta = cand;
        eta = e;
        obj = o;
    }

    let (h, _) = newton_system(&st.xs, y, &beta, &eta, ps.as_ref());
    let cov_std = h
        .try_inverse()
        .ok_or_else(|| ModelError::RankDeficient("information matrix is singular".into()))?;
    let coef = &st.a * &beta;
    let cov = &st.a * cov_std * st.a.transpose();
    let eta_raw = x * &coef;
    Ok(FittedModel {
        names: names.to_vec(),
        coefficients: coef.iter().copied().collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect()).collect(),
        deviance: deviance(eta_raw.as_slice(), y),
        iterations,
        lambda: penalty.map(|(_, l)| l),
    })
}

/// Linear predictor `X beta`.
pub fn linear_predictor(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (x * DVector::from_column_slice(beta)).iter().copied().collect()
}

pub fn predict(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    linear_predictor(x, beta).into_iter().map(inv_logit).collect()
}

/// Score vector `X'(y - mu)` at `beta`.
pub fn score(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let mu = predict(x, beta);
    let r = DVector::from_iterator(y.len(), y.iter().zip(&mu).map(|(a, b)| a - b));
    x.tr_mul(&r).iter().copied().collect()
}

/// Mean Bernoulli log-loss of probabilities `p`.
pub fn log_loss(p: &[f64], y: &[f64]) -> f64 {
    let eps = 1e-15;
    -p.iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let pi = pi.clamp(eps, 1.0 - eps);
            yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln()
        })
        .sum::<f64>()
        / p.len() as f64
}
