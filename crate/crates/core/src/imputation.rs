//! Multiple imputation by chained equations and the deletion simulation
//! used to judge imputation reliability.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{AnalysisFrame, ColumnKind, FrameError, OUTCOME};
use crate::modeling::{fit_logistic, pool_scalar, FitOptions};
use crate::stats::{inv_logit, mean, sample_variance};

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("invalid imputation config: {0}")]
    Config(String),
    #[error("'{0}' has no observed values to impute from")]
    AllMissing(String),
    #[error("the outcome has missing values; such rows belong out of the cohort, not in imputation")]
    OutcomeMissing,
    #[error("copy {copy}, cycle {cycle}, variable '{variable}': {message}")]
    Fit {
        copy: usize,
        cycle: usize,
        variable: String,
        message: String,
    },
    #[error("no complete cases to simulate from")]
    EmptyCompleteCases,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Method {
    /// Predictive mean matching with `k` donors.
    Pmm { k: usize },
    /// Bayesian normal linear regression.
    NormalLinear,
    /// Logistic regression refitted on a bootstrap sample.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputationConfig {
    pub m: usize,
    pub cycles: usize,
    pub seed: u64,
    /// Overrides of the default method (pmm for continuous, logistic for
    /// binary).
    pub methods: BTreeMap<String, Method>,
    pub pmm_k: usize,
    /// Overrides of the default predictor set (every other column,
    /// outcome included).
    pub predictors: BTreeMap<String, Vec<String>>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            m: 20,
            cycles: 10,
            seed: 0,
            methods: BTreeMap::new(),
            pmm_k: 5,
            predictors: BTreeMap::new(),
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<(), ImputeError> {
        if self.m < 2 {
            return Err(ImputeError::Config(format!("m = {} but at least 2 copies are needed", self.m)));
        }
        if self.cycles < 1 {
            return Err(ImputeError::Config("cycles must be at least 1".into()));
        }
        let bad_k = self.pmm_k == 0 || self.methods.values().any(|m| matches!(m, Method::Pmm { k: 0 }));
        if bad_k {
            return Err(ImputeError::Config("pmm needs k >= 1 donors".into()));
        }
        Ok(())
    }

    fn method_for(&self, name: &str, kind: ColumnKind) -> Method {
        self.methods.get(name).copied().unwrap_or(match kind {
            ColumnKind::Continuous => Method::Pmm { k: self.pmm_k },
            ColumnKind::Binary => Method::Logistic,
        })
    }

    fn predictors_for(&self, name: &str, frame: &AnalysisFrame) -> Vec<String> {
        self.predictors
            .get(name)
            .cloned()
            .unwrap_or_else(|| frame.names().into_iter().filter(|n| n != name).collect())
    }
}

/// Visit plan for one incomplete variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariablePlan {
    pub variable: String,
    pub method: Method,
    pub predictors: Vec<String>,
    /// Rows imputed.
    pub missing_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedSet {
    pub copies: Vec<AnalysisFrame>,
    pub seeds: Vec<u64>,
    pub cycles: usize,
    /// Incomplete variables in visit order.
    pub plan: Vec<VariablePlan>,
}

/// Per-copy seeds from the master seed.
pub fn copy_seeds(master: u64, m: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..m).map(|_| rng.next_u64()).collect()
}

/// Incomplete variables, most-missing first (ties by column order).
pub fn visit_plan(frame: &AnalysisFrame, config: &ImputationConfig) -> Result<Vec<VariablePlan>, ImputeError> {
    let mut plan = Vec::new();
    for col in &frame.columns {
        let miss = col.missing_count();
        if miss == 0 {
            continue;
        }
        if col.name == OUTCOME {
            return Err(ImputeError::OutcomeMissing);
        }
        if miss == col.values.len() {
            return Err(ImputeError::AllMissing(col.name.clone()));
        }
        let predictors = config.predictors_for(&col.name, frame);
        if predictors.is_empty() {
            return Err(ImputeError::Config(format!("'{}' has no predictors", col.name)));
        }
        for p in &predictors {
            if p == &col.name {
                return Err(ImputeError::Config(format!("'{p}' cannot predict itself")));
            }
            let pc = frame.column(p)?;
            if pc.missing_count() == pc.values.len() {
                return Err(ImputeError::AllMissing(p.clone()));
            }
        }
        plan.push(VariablePlan {
            variable: col.name.clone(),
            method: config.method_for(&col.name, col.kind),
            predictors,
            missing_rows: (0..col.values.len()).filter(|&i| col.values[i].is_none()).collect(),
        });
    }
    plan.sort_by_key(|p| std::cmp::Reverse(p.missing_rows.len()));
    Ok(plan)
}

fn design(cols: &[&[f64]], rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][rows[i]] })
}

/// Least squares with a posterior draw of `(beta, sigma)`.
struct LinearDraw {
    beta_hat: DVector<f64>,
    beta_star: DVector<f64>,
    sigma_star: f64,
}

fn linear_draw(x: &DMatrix<f64>, y: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<LinearDraw, String> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(format!("{n} observed rows for {p} regression parameters"));
    }
    let xtx = x.tr_mul(x);
    // small ridge keeps near-collinear auxiliaries solvable
    let ridge = 1e-8 * (0..p).map(|j| xtx[(j, j)]).fold(0.0, f64::max).max(1e-300);
    let chol = (xtx + DMatrix::identity(p, p) * ridge)
        .cholesky()
        .ok_or("predictor matrix is singular")?;
    let beta_hat = chol.solve(&x.tr_mul(y));
    let resid = y - x * &beta_hat;
    let rss = resid.norm_squared();
    let g: f64 = ChiSquared::new((n - p) as f64)
        .map_err(|e| e.to_string())?
        .sample(rng);
    let sigma_star = (rss / g).sqrt();
    let v = chol.inverse();
    let l = v.cholesky().ok_or("posterior covariance is not positive definite")?.l();
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta_star = &beta_hat + l * z * sigma_star;
    Ok(LinearDraw {
        beta_hat,
        beta_star,
        sigma_star,
    })
}

/// Donor values for each target prediction: a random pick among the `k`
/// observed rows whose predictions are nearest.
fn pmm_match(obs_pred: &[f64], obs_val: &[f64], targets: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut order: Vec<usize> = (0..obs_pred.len()).collect();
    order.sort_by(|&a, &b| obs_pred[a].total_cmp(&obs_pred[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| obs_pred[i]).collect();
    let k = k.min(sorted.len());
    targets
        .iter()
        .map(|&t| {
            let pos = sorted.partition_point(|&v| v < t);
            let (mut lo, mut hi) = (pos, pos);
            while hi - lo < k {
                let take_left = lo > 0 && (hi == sorted.len() || t - sorted[lo - 1] <= sorted[hi] - t);
                if take_left {
                    lo -= 1;
                } else {
                    hi += 1;
                }
            }
            obs_val[order[rng.gen_range(lo..hi)]]
        })
        .collect()
}

fn redraw(
    method: Method,
    target: &[f64],
    predictors: &[&[f64]],
    obs_rows: &[usize],
    mis_rows: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, String> {
    let x_obs = design(predictors, obs_rows);
    let x_mis = design(predictors, mis_rows);
    let y_obs = DVector::from_iterator(obs_rows.len(), obs_rows.iter().map(|&i| target[i]));
    match method {
        Method::NormalLinear => {
            let d = linear_draw(&x_obs, &y_obs, rng)?;
            let mu = &x_mis * &d.beta_star;
            Ok(mu
                .iter()
                .map(|m| m + d.sigma_star * rng.sample::<f64, _>(StandardNormal))
                .collect())
        }
        Method::Pmm { k } => {
            let d = linear_draw(&x_obs, &y_obs, rng)?;
            let obs_pred: Vec<f64> = (&x_obs * &d.beta_hat).iter().copied().collect();
            let mis_pred: Vec<f64> = (&x_mis * &d.beta_star).iter().copied().collect();
            Ok(pmm_match(&obs_pred, y_obs.as_slice(), &mis_pred, k, rng))
        }
        Method::Logistic => {
            let boot: Vec<usize> = (0..obs_rows.len())
                .map(|_| obs_rows[rng.gen_range(0..obs_rows.len())])
                .collect();
            let xb = design(predictors, &boot);
            let yb: Vec<f64> = boot.iter().map(|&i| target[i]).collect();
            let names: Vec<String> = (0..xb.ncols()).map(|j| format!("x{j}")).collect();
            let fit = fit_logistic(&xb, &yb, &names, &FitOptions::default()).map_err(|e| e.to_string())?;
            let beta = DVector::from_vec(fit.coefficients);
            Ok((&x_mis * beta)
                .iter()
                .map(|&eta| f64::from(u8::from(rng.gen::<f64>() < inv_logit(eta))))
                .collect())
        }
    }
}

fn impute_copy(
    frame: &AnalysisFrame,
    plan: &[VariablePlan],
    cycles: usize,
    copy: usize,
    seed: u64,
) -> Result<AnalysisFrame, ImputeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: BTreeMap<String, Vec<f64>> =
        frame.columns.iter().map(|c| (c.name.clone(), c.dense())).collect();
    let n = frame.n_rows();
    let mut observed_rows: Vec<Vec<usize>> = Vec::with_capacity(plan.len());
    for vp in plan {
        let col = data.get_mut(&vp.variable).expect("planned column exists");
        let obs: Vec<usize> = (0..n).filter(|i| col[*i].is_finite()).collect();
        for &i in &vp.missing_rows {
            col[i] = col[*obs.choose(&mut rng).expect("variable has observed values")];
        }
        observed_rows.push(obs);
    }
    for cycle in 1..=cycles {
        for (vp, obs) in plan.iter().zip(&observed_rows) {
            let preds: Vec<&[f64]> = vp.predictors.iter().map(|p| data[p].as_slice()).collect();
            let new = redraw(vp.method, &data[&vp.variable], &preds, obs, &vp.missing_rows, &mut rng).map_err(
                |message| ImputeError::Fit {
                    copy,
                    cycle,
                    variable: vp.variable.clone(),
                    message,
                },
            )?;
            let col = data.get_mut(&vp.variable).expect("planned column exists");
            for (&i, v) in vp.missing_rows.iter().zip(new) {
                col[i] = v;
            }
        }
    }
    let mut out = frame.clone();
    for vp in plan {
        let col = out.column_mut(&vp.variable)?;
        let src = &data[&vp.variable];
        for &i in &vp.missing_rows {
            col.values[i] = Some(src[i]);
        }
    }
    Ok(out)
}

/// `config.m` completed copies of `frame`.
pub fn impute(frame: &AnalysisFrame, config: &ImputationConfig) -> Result<ImputedSet, ImputeError> {
    config.validate()?;
    let plan = visit_plan(frame, config)?;
    let seeds = copy_seeds(config.seed, config.m);
    let copies = seeds
        .par_iter()
        .enumerate()
        .map(|(j, &s)| {
            if plan.is_empty() {
                Ok(frame.clone())
            } else {
                impute_copy(frame, &plan, config.cycles, j + 1, s)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ImputedSet {
        copies,
        seeds,
        cycles: config.cycles,
        plan,
    })
}

pub const MASK_FILE: &str = "mask.csv";
pub const MANIFEST_FILE: &str = "imputation_manifest.json";

pub fn copy_file_name(j: usize) -> String {
    format!("imputed_{:02}.csv", j + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationManifest {
    pub m: usize,
    pub cycles: usize,
    pub seeds: Vec<u64>,
    pub order: Vec<String>,
    pub methods: BTreeMap<String, Method>,
    pub predictors: BTreeMap<String, Vec<String>>,
    pub files: Vec<String>,
    pub columns: Vec<(String, ColumnKind)>,
}

impl ImputedSet {
    pub fn m(&self) -> usize {
        self.copies.len()
    }

    pub fn manifest(&self) -> ImputationManifest {
        ImputationManifest {
            m: self.m(),
            cycles: self.cycles,
            seeds: self.seeds.clone(),
            order: self.plan.iter().map(|p| p.variable.clone()).collect(),
            methods: self.plan.iter().map(|p| (p.variable.clone(), p.method)).collect(),
            predictors: self.plan.iter().map(|p| (p.variable.clone(), p.predictors.clone())).collect(),
            files: (0..self.m()).map(copy_file_name).collect(),
            columns: self.copies.first().map(|c| c.kinds()).unwrap_or_default(),
        }
    }

    /// Copies, the mask and the manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ImputeError> {
        std::fs::create_dir_all(dir)?;
        for (j, c) in self.copies.iter().enumerate() {
            c.write_csv(&dir.join(copy_file_name(j)))?;
        }
        let mut w = csv::Writer::from_path(dir.join(MASK_FILE))?;
        w.write_record(["patient_id", "variable"])?;
        let ids = self.copies.first().map(|c| c.ids.as_slice()).unwrap_or_default();
        for vp in &self.plan {
            for &i in &vp.missing_rows {
                w.write_record([ids[i].as_str(), vp.variable.as_str()])?;
            }
        }
        w.flush()?;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest())? + "\n",
        )?;
        Ok(())
    }

    /// Reads back copies written by [`ImputedSet::write`]; the per-variable
    /// plan keeps only names, methods and predictors.
    pub fn read(dir: &Path) -> Result<(ImputationManifest, Vec<AnalysisFrame>), ImputeError> {
        let manifest: ImputationManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let copies = manifest
            .files
            .iter()
            .map(|f| AnalysisFrame::read_csv(&dir.join(f), &manifest.columns))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((manifest, copies))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub target: String,
    pub rates: Vec<f64>,
    pub replications: usize,
    pub mechanism: SimMechanism,
    pub imputation: ImputationConfig,
    pub level: f64,
    /// Draw each replication's sample with replacement from the complete
    /// cases, so interval coverage refers to their mean as the population
    /// mean. Without it every replication reuses the same rows.
    pub resample: bool,
}

/// Deletion mechanism; under MAR the deletion odds rise by `exp(slope)`
/// per SD of `covariate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SimMechanism {
    Mcar,
    Mar { covariate: String, slope: f64 },
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            target: "bmi".into(),
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            replications: 50,
            mechanism: SimMechanism::Mcar,
            imputation: ImputationConfig {
                m: 5,
                cycles: 5,
                ..ImputationConfig::default()
            },
            level: 0.95,
            resample: true,
        }
    }
}

/// One rate's row of the reliability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub rate: f64,
    pub n_deleted: usize,
    pub rmse: f64,
    /// Monte-Carlo SE of `rmse`.
    pub rmse_se: f64,
    pub bias: f64,
    pub bias_se: f64,
    /// Share of replications whose interval for the mean covered the
    /// complete-data mean.
    pub coverage: f64,
    pub replications: usize,
}

/// Deletion order of rows: rows earlier in the order are deleted first,
/// so higher rates delete supersets of lower ones.
fn deletion_order(weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    // weighted sampling without replacement by exponential keys
    let keys: Vec<f64> = weights
        .iter()
        .map(|&w| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -u.ln() / w
        })
        .collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    order
}

struct RepResult {
    sq_err: f64,
    err: f64,
    cells: usize,
    covered: bool,
}

/// Deletes `target` values at each rate, imputes, and compares with the
/// held-out truth. `complete` must have no missing cells.
pub fn missingness_simulation(
    complete: &AnalysisFrame,
    config: &SimulationConfig,
) -> Result<Vec<ReliabilityRow>, ImputeError> {
    if complete.n_rows() == 0 {
        return Err(ImputeError::EmptyCompleteCases);
    }
    if !complete.is_complete() {
        return Err(ImputeError::Config("the simulation frame must have no missing cells".into()));
    }
    config.imputation.validate()?;
    if config.replications == 0 {
        return Err(ImputeError::Config("need at least one replication".into()));
    }
    for &r in &config.rates {
        if !(0.0..1.0).contains(&r) {
            return Err(ImputeError::Config(format!("rate {r} must lie in [0, 1)")));
        }
        if r == 0.0 {
            log::warn!("rate 0 deletes nothing; its RMSE is 0 by definition");
        }
    }
    let n = complete.n_rows();
    let true_mean = mean(&complete.column(&config.target)?.dense());
    if let SimMechanism::Mar { covariate, .. } = &config.mechanism {
        complete.column(covariate)?;
    }
    let mut master = ChaCha8Rng::seed_from_u64(config.imputation.seed);
    let rep_seeds: Vec<[u64; 3]> = (0..config.replications)
        .map(|_| [master.next_u64(), master.next_u64(), master.next_u64()])
        .collect();
    let per_rep: Vec<Vec<RepResult>> = rep_seeds
        .par_iter()
        .map(|&[boot_seed, del_seed, imp_seed]| {
            let sample = if config.resample {
                let mut rng = ChaCha8Rng::seed_from_u64(boot_seed);
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                complete.subset(&rows)
            } else {
                complete.clone()
            };
            let truth = sample.column(&config.target)?.dense();
            let weights: Vec<f64> = match &config.mechanism {
                SimMechanism::Mcar => vec![1.0; n],
                SimMechanism::Mar { covariate, slope } => {
                    let x = sample.column(covariate)?.dense();
                    let (mu, sd) = (mean(&x), sample_variance(&x).sqrt().max(f64::MIN_POSITIVE));
                    x.iter().map(|v| (slope * (v - mu) / sd).exp()).collect()
                }
            };
            let order = deletion_order(&weights, &mut ChaCha8Rng::seed_from_u64(del_seed));
            config
                .rates
                .iter()
                .map(|&rate| {
                    let k = (rate * n as f64).round() as usize;
                    let deleted = &order[..k];
                    let mut frame = sample.clone();
                    let col = frame.column_mut(&config.target)?;
                    for &i in deleted {
                        col.values[i] = None;
                    }
                    let cfg = ImputationConfig {
                        seed: imp_seed,
                        ..config.imputation.clone()
                    };
                    let set = impute(&frame, &cfg)?;
                    let (mut sq_err, mut err) = (0.0, 0.0);
                    let mut means = Vec::with_capacity(set.m());
                    let mut vars = Vec::with_capacity(set.m());
                    for c in &set.copies {
                        let v = c.column(&config.target)?.dense();
                        for &i in deleted {
                            let d = v[i] - truth[i];
                            sq_err += d * d;
                            err += d;
                        }
                        means.push(mean(&v));
                        vars.push(sample_variance(&v) / n as f64);
                    }
                    let pooled = pool_scalar(&means, &vars);
                    let (lo, hi) = pooled.interval(config.level);
                    Ok(RepResult {
                        sq_err,
                        err,
                        cells: k * set.m(),
                        covered: lo <= true_mean && true_mean <= hi,
                    })
                })
                .collect::<Result<Vec<_>, ImputeError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reps = config.replications as f64;
    Ok(config
        .rates
        .iter()
        .enumerate()
        .map(|(r, &rate)| {
            let rmses: Vec<f64> = per_rep
                .iter()
                .map(|rep| {
                    let x = &rep[r];
                    if x.cells == 0 {
                        0.0
                    } else {
                        (x.sq_err / x.cells as f64).sqrt()
                    }
                })
                .collect();
            let biases: Vec<f64> = per_rep
                .iter()
                .map(|rep| {
                    let x = &rep[r];
                    if x.cells == 0 {
                        0.0
                    } else {
                        x.err / x.cells as f64
                    }
                })
                .collect();
            ReliabilityRow {
                rate,
                n_deleted: (rate * n as f64).round() as usize,
                rmse: mean(&rmses),
                rmse_se: (sample_variance(&rmses) / reps).sqrt(),
                bias: mean(&biases),
                bias_se: (sample_variance(&biases) / reps).sqrt(),
                coverage: per_rep.iter().filter(|rep| rep[r].covered).count() as f64 / reps,
                replications: config.replications,
            }
        })
        .collect())
}

pub fn write_reliability_csv(rows: &[ReliabilityRow], path: &Path) -> Result<(), ImputeError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rate", "n_deleted", "rmse", "rmse_se", "bias", "bias_se", "coverage", "replications"])?;
    for r in rows {
        use crate::store::format_f64 as f;
        w.write_record([
            f(r.rate),
            r.n_deleted.to_string(),
            f(r.rmse),
            f(r.rmse_se),
            f(r.bias),
            f(r.bias_se),
            f(r.coverage),
            r.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
