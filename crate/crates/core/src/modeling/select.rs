use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{DesignMeta, Family, ModelSpec};
use super::logistic::{fit_penalized, log_loss, predict, FitOptions, FittedModel};
use super::pool::{pool_rubin, pool_scalar, pool_single, PooledModel, PooledScalar};
use super::ModelError;
use crate::evaluation::{auc_of, calibration_table, expected_calibration_error};
use crate::frame::AnalysisFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectOptions {
    pub fit: FitOptions,
    /// Pooled AUCs closer than this are ties.
    pub auc_tie: f64,
    /// Among AUC ties, ECEs closer than this are ties too.
    pub ece_tie: f64,
    pub level: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            fit: FitOptions::default(),
            auc_tie: 0.005,
            ece_tie: 0.005,
            level: 0.95,
        }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub name: String,
    pub spec: ModelSpec,
    pub n_params: usize,
    pub lambda: Option<f64>,
    pub auc: Option<PooledScalar>,
    pub ece: Option<PooledScalar>,
    pub dev_log_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: usize,
    pub meta: DesignMeta,
    pub lambda: Option<f64>,
    /// Pooled fit on the training copies.
    pub train_model: PooledModel,
    pub table: Vec<CandidateResult>,
}

impl Selection {
    pub fn chosen_spec(&self) -> &ModelSpec {
        &self.meta.spec
    }
}

fn pool(fits: &[FittedModel]) -> Result<PooledModel, ModelError> {
    if fits.len() == 1 {
        Ok(pool_single(&fits[0]))
    } else {
        pool_rubin(fits)
    }
}

/// Design matrices and outcomes of each copy.
fn matrices(meta: &DesignMeta, copies: &[AnalysisFrame]) -> Result<Vec<(DMatrix<f64>, Vec<f64>)>, ModelError> {
    copies
        .iter()
        .map(|c| Ok((meta.matrix(c)?, c.outcome()?)))
        .collect()
}

/// Fits every copy with the same layout and penalty, then pools.
fn fit_copies(
    meta: &DesignMeta,
    data: &[(DMatrix<f64>, Vec<f64>)],
    lambda: Option<f64>,
    opts: &FitOptions,
) -> Result<PooledModel, ModelError> {
    let names = meta.names();
    let penalty = lambda.map(|l| (meta.penalty(), l));
    let fits = data
        .par_iter()
        .map(|(x, y)| fit_penalized(x, y, &names, penalty.as_ref().map(|(p, l)| (p, *l)), opts))
        .collect::<Result<Vec<_>, _>>()?;
    pool(&fits)
}

fn mean_log_loss(model: &PooledModel, data: &[(DMatrix<f64>, Vec<f64>)]) -> f64 {
    data.iter()
        .map(|(x, y)| log_loss(&predict(x, &model.beta), y))
        .sum::<f64>()
        / data.len() as f64
}

struct Scored {
    meta: DesignMeta,
    model: PooledModel,
    lambda: Option<f64>,
    auc: PooledScalar,
    ece: PooledScalar,
    log_loss: f64,
}

fn score_candidate(
    spec: &ModelSpec,
    train: &[AnalysisFrame],
    dev: &[AnalysisFrame],
    opts: &SelectOptions,
) -> Result<Scored, ModelError> {
    let stacked = AnalysisFrame::concat(&train.iter().collect::<Vec<_>>())?;
    let meta = DesignMeta::new(spec, &stacked)?;
    let train_data = matrices(&meta, train)?;
    let dev_data = matrices(&meta, dev)?;
    let (model, lambda) = match spec.family {
        Family::LogisticLinear => (fit_copies(&meta, &train_data, None, &opts.fit)?, None),
        Family::AdditiveSpline => {
            let mut best: Option<(f64, PooledModel, f64)> = None;
            let mut last_err = None;
            for &lambda in &spec.spline.penalty_grid {
                match fit_copies(&meta, &train_data, Some(lambda), &opts.fit) {
                    Ok(m) => {
                        let ll = mean_log_loss(&m, &dev_data);
                        log::debug!("{}: lambda {lambda} dev log-loss {ll:.6}", spec.name);
                        if best.as_ref().is_none_or(|(b, _, _)| ll < *b) {
                            best = Some((ll, m, lambda));
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            match best {
                Some((_, m, l)) => (m, Some(l)),
                None => {
                    return Err(last_err
                        .unwrap_or_else(|| ModelError::InvalidInput(format!("'{}' has an empty penalty grid", spec.name))))
                }
            }
        }
    };
    let mut aucs = Vec::with_capacity(dev_data.len());
    let mut auc_vars = Vec::with_capacity(dev_data.len());
    let mut eces = Vec::with_capacity(dev_data.len());
    for (x, y) in &dev_data {
        let p = predict(x, &model.beta);
        let a = auc_of(&p, y, opts.level).map_err(|e| ModelError::InvalidInput(format!("development set: {e}")))?;
        let t = calibration_table(&p, y).map_err(|e| ModelError::InvalidInput(format!("development set: {e}")))?;
        aucs.push(a.auc);
        auc_vars.push(a.variance);
        eces.push(expected_calibration_error(&t));
    }
    Ok(Scored {
        log_loss: mean_log_loss(&model, &dev_data),
        meta,
        model,
        lambda,
        auc: pool_scalar(&aucs, &auc_vars),
        ece: pool_scalar(&eces, &[]),
    })
}

/// Index of the winner among `(auc, ece, n_params, complexity)` rows:
/// highest AUC, then among AUC ties the lowest ECE, then among ECE ties
/// the fewest parameters and the simplest transform; menu order last.
pub fn rank_candidates(rows: &[(f64, f64, usize, u8)], auc_tie: f64, ece_tie: f64) -> Option<usize> {
    let best_auc = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..rows.len()).filter(|&i| best_auc - rows[i].0 < auc_tie).collect();
    let best_ece = tied.iter().map(|&i| rows[i].1).fold(f64::INFINITY, f64::min);
    tied.into_iter()
        .filter(|&i| rows[i].1 - best_ece < ece_tie)
        .min_by_key(|&i| (rows[i].2, rows[i].3, i))
}

/// Fits each candidate on the training copies, scores the pooled model on
/// the development copies and picks one. Failing candidates are recorded
/// and skipped.
pub fn select_model(
    candidates: &[ModelSpec],
    train: &[AnalysisFrame],
    dev: &[AnalysisFrame],
    opts: &SelectOptions,
) -> Result<Selection, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::InvalidInput("no candidate models".into()));
    }
    if train.is_empty() || train.len() != dev.len() {
        return Err(ModelError::InvalidInput(format!(
            "need matching train and development copies (got {} and {})",
            train.len(),
            dev.len()
        )));
    }
    let scored: Vec<Result<Scored, ModelError>> = candidates
        .iter()
        .map(|spec| {
            let r = score_candidate(spec, train, dev, opts);
            if let Err(e) = &r {
                log::warn!("candidate '{}' skipped: {e}", spec.name);
            }
            r
        })
        .collect();
    let table: Vec<CandidateResult> = candidates
        .iter()
        .zip(&scored)
        .map(|(spec, r)| match r {
            Ok(s) => CandidateResult {
                name: spec.name.clone(),
                spec: spec.clone(),
                n_params: s.meta.n_params(),
                lambda: s.lambda,
                auc: Some(s.auc),
                ece: Some(s.ece),
                dev_log_loss: Some(s.log_loss),
                error: None,
            },
            Err(e) => CandidateResult {
                name: spec.name.clone(),
                spec: spec.clone(),
                n_params: 0,
                lambda: None,
                auc: None,
                ece: None,
                dev_log_loss: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let ok: Vec<usize> = (0..scored.len()).filter(|&i| scored[i].is_ok()).collect();
    if ok.is_empty() {
        let msgs: Vec<String> = table
            .iter()
            .map(|r| format!("{}: {}", r.name, r.error.as_deref().unwrap_or("")))
            .collect();
        return Err(ModelError::AllCandidatesFailed(msgs.join("; ")));
    }
    let rows: Vec<(f64, f64, usize, u8)> = ok
        .iter()
        .map(|&i| {
            let s = scored[i].as_ref().expect("filtered");
            (s.auc.estimate, s.ece.estimate, s.meta.n_params(), candidates[i].complexity_rank())
        })
        .collect();
    let chosen = ok[rank_candidates(&rows, opts.auc_tie, opts.ece_tie).expect("nonempty")];
    let s = scored.into_iter().nth(chosen).expect("index in range").expect("chosen is ok");
    Ok(Selection {
        chosen,
        meta: s.meta,
        lambda: s.lambda,
        train_model: s.model,
        table,
    })
}

/// Refits the chosen layout and penalty on each `train_j + dev_j` and pools.
pub fn refit_final(
    meta: &DesignMeta,
    lambda: Option<f64>,
    train: &[AnalysisFrame],
    dev: &[AnalysisFrame],
    opts: &FitOptions,
) -> Result<PooledModel, ModelError> {
    if train.len() != dev.len() || train.is_empty() {
        return Err(ModelError::InvalidInput("need matching train and development copies".into()));
    }
    let joined = train
        .iter()
        .zip(dev)
        .map(|(t, d)| AnalysisFrame::concat(&[t, d]))
        .collect::<Result<Vec<_>, _>>()?;
    let data = matrices(meta, &joined)?;
    fit_copies(meta, &data, lambda, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_rules() {
        // clear AUC winner
        assert_eq!(rank_candidates(&[(0.70, 0.01, 6, 0), (0.72, 0.03, 18, 3)], 0.005, 0.005), Some(1));
        // AUC tie, ECE decides
        assert_eq!(rank_candidates(&[(0.720, 0.020, 6, 0), (0.722, 0.010, 18, 3)], 0.005, 0.005), Some(1));
        // both tie, parsimony then transform rank
        assert_eq!(
            rank_candidates(&[(0.721, 0.012, 8, 2), (0.722, 0.010, 6, 1), (0.720, 0.011, 6, 0)], 0.005, 0.005),
            Some(2)
        );
        assert_eq!(rank_candidates(&[], 0.005, 0.005), None);
    }
}
