//! Partitioning, discrimination, calibration, Hosmer-Lemeshow, and the
//! binormal AUC sample-size calculation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{AnalysisFrame, FrameError};
use crate::modeling::{pool_scalar, predict, DesignMeta, ModelError, PooledModel, PooledScalar};
use crate::stats::{chi2_sf, norm_quantile, sample_variance};
use crate::store::format_f64;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {0} in the evaluation set")]
    EmptyGroup(&'static str),
    #[error("need at least {needed} rows, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionSpec {
    /// Train, development and validation fractions.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            fractions: [0.5, 0.25, 0.25],
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(EvalError::InvalidInput(format!(
                "fractions {:?} must each lie in (0, 1)",
                self.fractions
            )));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(EvalError::InvalidInput(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Part sizes by largest remainder; equal remainders favour the
    /// earlier part.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let exact: Vec<f64> = self.fractions.iter().map(|f| f * n as f64).collect();
        let mut sizes = [0usize; 3];
        for (s, e) in sizes.iter_mut().zip(&exact) {
            *s = e.floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut left = n - sizes.iter().sum::<usize>();
        for k in order {
            if left == 0 {
                break;
            }
            sizes[k] += 1;
            left -= 1;
        }
        sizes
    }
}

/// Random split of `n` rows: a seeded shuffle of row positions, then the
/// first block is train, the next development, the rest validation.
pub fn partition(n: usize, spec: &PartitionSpec) -> Result<Vec<Split>, EvalError> {
    spec.validate()?;
    if n < 3 {
        return Err(EvalError::TooFew { needed: 3, got: n });
    }
    let sizes = spec.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut labels = vec![Split::Train; n];
    for (k, &row) in order.iter().enumerate() {
        labels[row] = if k < sizes[0] {
            Split::Train
        } else if k < sizes[0] + sizes[1] {
            Split::Dev
        } else {
            Split::Validation
        };
    }
    Ok(labels)
}

pub fn split_rows(labels: &[Split], which: Split) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == which)
        .map(|(i, _)| i)
        .collect()
}

pub fn write_partition(ids: &[String], labels: &[Split], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["patient_id", "split"])?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), l.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_partition(path: &Path) -> Result<(Vec<String>, Vec<Split>), EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let label = rec.get(1).and_then(Split::parse).ok_or_else(|| {
            EvalError::InvalidInput(format!("{}, line {}: bad split label", path.display(), k + 2))
        })?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        labels.push(label);
    }
    Ok((ids, labels))
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    /// DeLong variance of the estimate.
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

/// Mann-Whitney AUC (ties count one half) with a DeLong interval.
pub fn auc(cases: &[f64], controls: &[f64], level: f64) -> Result<AucResult, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyGroup("cases"));
    }
    if controls.is_empty() {
        return Err(EvalError::EmptyGroup("controls"));
    }
    let (n1, n0) = (cases.len(), controls.len());
    let all: Vec<f64> = cases.iter().chain(controls).copied().collect();
    let r_all = midranks(&all);
    let r_cases = midranks(cases);
    let r_controls = midranks(controls);
    let rank_sum: f64 = r_all[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let value = u / (n1 as f64 * n0 as f64);
    // structural components
    let v10: Vec<f64> = (0..n1).map(|i| (r_all[i] - r_cases[i]) / n0 as f64).collect();
    let v01: Vec<f64> = (0..n0)
        .map(|j| 1.0 - (r_all[n1 + j] - r_controls[j]) / n1 as f64)
        .collect();
    let variance = sample_variance(&v10) / n1 as f64 + sample_variance(&v01) / n0 as f64;
    let z = norm_quantile(0.5 + level / 2.0);
    let half = z * variance.sqrt();
    Ok(AucResult {
        auc: value,
        variance,
        ci_low: (value - half).max(0.0),
        ci_high: (value + half).min(1.0),
        level,
    })
}

fn split_by_outcome(pred: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut cases = Vec::new();
    let mut controls = Vec::new();
    for (&p, &yi) in pred.iter().zip(y) {
        if yi == 1.0 {
            cases.push(p);
        } else {
            controls.push(p);
        }
    }
    (cases, controls)
}

pub fn auc_of(pred: &[f64], y: &[f64], level: f64) -> Result<AucResult, EvalError> {
    let (cases, controls) = split_by_outcome(pred, y);
    auc(&cases, &controls, level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub decile: usize,
    pub n: usize,
    pub mean_pred: f64,
    pub obs_rate: f64,
}

/// Row positions sorted by prediction, cut into `groups` equal-count
/// groups; the remainder goes one each to the lowest groups.
fn risk_groups(pred: &[f64], groups: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    idx.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]).then(a.cmp(&b)));
    let base = pred.len() / groups;
    let extra = pred.len() % groups;
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let len = base + usize::from(g < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn calibration_table(pred: &[f64], y: &[f64]) -> Result<Vec<CalibrationRow>, EvalError> {
    if pred.len() != y.len() {
        return Err(EvalError::InvalidInput("predictions and outcomes differ in length".into()));
    }
    if pred.len() < 10 {
        return Err(EvalError::TooFew {
            needed: 10,
            got: pred.len(),
        });
    }
    Ok(risk_groups(pred, 10)
        .into_iter()
        .enumerate()
        .map(|(g, rows)| {
            let n = rows.len();
            CalibrationRow {
                decile: g + 1,
                n,
                mean_pred: rows.iter().map(|&i| pred[i]).sum::<f64>() / n as f64,
                obs_rate: rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64,
            }
        })
        .collect())
}

/// Count-weighted mean absolute gap between predicted and observed risk.
pub fn expected_calibration_error(table: &[CalibrationRow]) -> f64 {
    let total: usize = table.iter().map(|r| r.n).sum();
    table
        .iter()
        .map(|r| r.n as f64 * (r.mean_pred - r.obs_rate).abs())
        .sum::<f64>()
        / total as f64
}

pub fn write_calibration_csv(table: &[CalibrationRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["decile", "n", "mean_pred", "obs_rate"])?;
    for r in table {
        w.write_record([
            r.decile.to_string(),
            r.n.to_string(),
            format_f64(r.mean_pred),
            format_f64(r.obs_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const HL_LARGE_N: usize = 5_000;
pub const HL_WARNING: &str =
    "Hosmer-Lemeshow is over-sensitive at large sample sizes; judge calibration from the decile table";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HosmerLemeshow {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub large_n_warning: bool,
}

pub fn hosmer_lemeshow(pred: &[f64], y: &[f64], groups: usize) -> Result<HosmerLemeshow, EvalError> {
    if groups < 3 {
        return Err(EvalError::InvalidInput("need at least 3 groups".into()));
    }
    if pred.len() < 2 * groups {
        return Err(EvalError::TooFew {
            needed: 2 * groups,
            got: pred.len(),
        });
    }
    if pred.iter().all(|p| *p == pred[0]) {
        return Err(EvalError::Degenerate("all predictions are identical".into()));
    }
    let mut stat = 0.0;
    for rows in risk_groups(pred, groups) {
        let n = rows.len() as f64;
        let expected: f64 = rows.iter().map(|&i| pred[i]).sum();
        let observed: f64 = rows.iter().map(|&i| y[i]).sum();
        let pbar = expected / n;
        let denom = n * pbar * (1.0 - pbar);
        if denom <= 0.0 {
            return Err(EvalError::Degenerate(format!(
                "a risk group has mean prediction {pbar}"
            )));
        }
        stat += (observed - expected).powi(2) / denom;
    }
    let dof = groups - 2;
    let large = pred.len() > HL_LARGE_N;
    if large {
        log::warn!("{HL_WARNING} (n = {})", pred.len());
    }
    Ok(HosmerLemeshow {
        statistic: stat,
        dof,
        p_value: chi2_sf(stat, dof as f64),
        large_n_warning: large,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC vertices from the strictest threshold down, starting at (0, 0).
pub fn roc_points(pred: &[f64], y: &[f64]) -> Vec<RocPoint> {
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    idx.sort_by(|&a, &b| pred[b].total_cmp(&pred[a]));
    let pos = y.iter().filter(|v| **v == 1.0).count().max(1) as f64;
    let neg = y.iter().filter(|v| **v != 1.0).count().max(1) as f64;
    let mut out = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let t = pred[idx[i]];
        while i < idx.len() && pred[idx[i]] == t {
            if y[idx[i]] == 1.0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        out.push(RocPoint {
            fpr: fp / neg,
            tpr: tp / pos,
            threshold: t,
        });
    }
    out
}

pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr", "threshold"])?;
    for p in points {
        let t = if p.threshold.is_finite() {
            format_f64(p.threshold)
        } else {
            "inf".into()
        };
        w.write_record([format_f64(p.fpr), format_f64(p.tpr), t])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize {
    pub n_cases: u64,
    pub n_controls: u64,
    /// Unrounded number of cases.
    pub raw_n: f64,
}

/// Binormal variance of the AUC estimate for controls-to-cases ratio `kappa`.
fn auc_variance(a_auc: f64, kappa: f64) -> f64 {
    let a = std::f64::consts::SQRT_2 * norm_quantile(a_auc);
    0.0099 * (-a * a / 4.0).exp() * ((5.0 * a * a + 8.0) + (a * a + 8.0) / kappa)
}

/// Cases and controls needed to tell `alt_auc` from 0.5.
pub fn sample_size_auc(alt_auc: f64, alpha: f64, power: f64, kappa: f64) -> Result<SampleSize, EvalError> {
    if !(alt_auc > 0.5 && alt_auc < 1.0) {
        return Err(EvalError::InvalidInput(format!(
            "alternative AUC {alt_auc} must lie in (0.5, 1); 0.5 has no detectable difference"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(power > 0.0 && power < 1.0) || !(kappa > 0.0 && kappa.is_finite()) {
        return Err(EvalError::InvalidInput(format!(
            "need 0 < alpha, power < 1 and kappa > 0 (got {alpha}, {power}, {kappa})"
        )));
    }
    let za = norm_quantile(1.0 - alpha / 2.0);
    let zb = norm_quantile(power);
    let num = za * auc_variance(0.5, kappa).sqrt() + zb * auc_variance(alt_auc, kappa).sqrt();
    let raw = num * num / (alt_auc - 0.5).powi(2);
    Ok(SampleSize {
        n_cases: raw.ceil() as u64,
        n_controls: (kappa * raw).ceil() as u64,
        raw_n: raw,
    })
}

/// Metrics of one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_events: usize,
    pub auc: AucResult,
    pub calibration: Vec<CalibrationRow>,
    pub ece: f64,
    pub hosmer_lemeshow: Option<HosmerLemeshow>,
}

pub fn evaluate_predictions(pred: &[f64], y: &[f64], level: f64) -> Result<EvalReport, EvalError> {
    let auc = auc_of(pred, y, level)?;
    let calibration = calibration_table(pred, y)?;
    let ece = expected_calibration_error(&calibration);
    let hosmer_lemeshow = match hosmer_lemeshow(pred, y, 10) {
        Ok(h) => Some(h),
        Err(e) => {
            log::warn!("Hosmer-Lemeshow skipped: {e}");
            None
        }
    };
    Ok(EvalReport {
        n: pred.len(),
        n_events: y.iter().filter(|v| **v == 1.0).count(),
        auc,
        calibration,
        ece,
        hosmer_lemeshow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyMetrics {
    pub auc: f64,
    pub auc_variance: f64,
    pub ece: f64,
    pub log_loss: f64,
}

/// Metrics pooled over imputed copies of one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEvalReport {
    pub m: usize,
    pub n: usize,
    pub n_events: usize,
    pub auc: PooledScalar,
    pub auc_ci: (f64, f64),
    pub ece: PooledScalar,
    pub log_loss: f64,
    pub per_copy: Vec<CopyMetrics>,
    /// Table, Hosmer-Lemeshow and ROC from copy-averaged predictions.
    pub calibration: Vec<CalibrationRow>,
    pub hosmer_lemeshow: Option<HosmerLemeshow>,
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
}

/// Per-copy predictions of `model` on each frame.
pub fn copy_predictions(
    model: &PooledModel,
    meta: &DesignMeta,
    copies: &[AnalysisFrame],
) -> Result<Vec<Vec<f64>>, EvalError> {
    if model.names != meta.names() {
        return Err(ModelError::MetadataMismatch(format!(
            "model columns {:?} do not match design {:?}",
            model.names,
            meta.names()
        ))
        .into());
    }
    copies
        .iter()
        .map(|c| Ok(predict(&meta.matrix(c)?, &model.beta)))
        .collect()
}

/// Scores every copy, computes per-copy AUC and ECE and pools them by
/// Rubin's rules on the raw scale.
pub fn evaluate_pooled(
    model: &PooledModel,
    meta: &DesignMeta,
    copies: &[AnalysisFrame],
    level: f64,
) -> Result<PooledEvalReport, EvalError> {
    if copies.is_empty() {
        return Err(EvalError::InvalidInput("no evaluation copies".into()));
    }
    let y = copies[0].outcome()?;
    for c in &copies[1..] {
        if c.ids != copies[0].ids || c.outcome()? != y {
            return Err(EvalError::InvalidInput(
                "evaluation copies differ in rows or outcomes".into(),
            ));
        }
    }
    let preds = copy_predictions(model, meta, copies)?;
    let mut per_copy = Vec::with_capacity(preds.len());
    for p in &preds {
        let a = auc_of(p, &y, level)?;
        let table = calibration_table(p, &y)?;
        per_copy.push(CopyMetrics {
            auc: a.auc,
            auc_variance: a.variance,
            ece: expected_calibration_error(&table),
            log_loss: crate::modeling::log_loss(p, &y),
        });
    }
    let aucs: Vec<f64> = per_copy.iter().map(|c| c.auc).collect();
    let auc_vars: Vec<f64> = per_copy.iter().map(|c| c.auc_variance).collect();
    let eces: Vec<f64> = per_copy.iter().map(|c| c.ece).collect();
    let auc_pooled = pool_scalar(&aucs, &auc_vars);
    let (lo, hi) = auc_pooled.interval(level);
    let n = y.len();
    let mean_pred: Vec<f64> = (0..n)
        .map(|i| preds.iter().map(|p| p[i]).sum::<f64>() / preds.len() as f64)
        .collect();
    let calibration = calibration_table(&mean_pred, &y)?;
    let hosmer_lemeshow = hosmer_lemeshow(&mean_pred, &y, 10).ok();
    Ok(PooledEvalReport {
        m: copies.len(),
        n,
        n_events: y.iter().filter(|v| **v == 1.0).count(),
        auc: auc_pooled,
        auc_ci: (lo.max(0.0), hi.min(1.0)),
        ece: pool_scalar(&eces, &[]),
        log_loss: per_copy.iter().map(|c| c.log_loss).sum::<f64>() / per_copy.len() as f64,
        per_copy,
        calibration,
        hosmer_lemeshow,
        roc: roc_points(&mean_pred, &y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_aucs() {
        assert_eq!(auc(&[0.9, 0.8], &[0.7, 0.1], 0.95).unwrap().auc, 1.0);
        assert_eq!(auc(&[0.5], &[0.5], 0.95).unwrap().auc, 0.5);
        assert_eq!(auc(&[0.2], &[0.8], 0.95).unwrap().auc, 0.0);
        assert!(matches!(auc(&[], &[0.1], 0.95), Err(EvalError::EmptyGroup("cases"))));
    }

    #[test]
    fn delong_matches_hand_computation() {
        // cases {3, 2}, controls {1, 2}: psi table [[1,1],[1,0.5]]
        let r = auc(&[3.0, 2.0], &[1.0, 2.0], 0.95).unwrap();
        assert_eq!(r.auc, 0.875);
        // v10 = {1, 0.75}, v01 = {1, 0.75}; each sample variance 0.03125
        assert!((r.variance - (0.03125 / 2.0 + 0.03125 / 2.0)).abs() < 1e-15);
        assert!(r.ci_low <= r.auc && r.auc <= r.ci_high && r.ci_high <= 1.0);
    }

    #[test]
    fn partition_sizes() {
        let spec = PartitionSpec::default();
        assert_eq!(spec.sizes(10), [5, 3, 2]);
        assert_eq!(spec.sizes(28447), [14223, 7112, 7112]);
        let a = partition(10, &spec).unwrap();
        assert_eq!(a, partition(10, &spec).unwrap());
        assert_eq!(split_rows(&a, Split::Train).len(), 5);
        assert!(partition(
            10,
            &PartitionSpec {
                fractions: [0.5, 0.5, 0.0],
                seed: 1
            }
        )
        .is_err());
        assert!(partition(2, &spec).is_err());
    }

    #[test]
    fn sample_size_examples() {
        let s = sample_size_auc(0.55, 0.05, 0.80, 10.0).unwrap();
        assert!((s.raw_n - 274.362).abs() < 1e-3, "{}", s.raw_n);
        assert_eq!((s.n_cases, s.n_controls), (275, 2744));
        // independent oracle computed before the build
        let s = sample_size_auc(0.75, 0.05, 0.90, 1.0).unwrap();
        assert!((s.raw_n - 27.342).abs() < 1e-3, "{}", s.raw_n);
        assert_eq!((s.n_cases, s.n_controls), (28, 28));
        assert!(sample_size_auc(0.5, 0.05, 0.8, 10.0).is_err());
    }

    #[test]
    fn calibration_groups_spread_remainder_low() {
        let pred: Vec<f64> = (0..23).map(|i| i as f64 / 23.0).collect();
        let y = vec![0.0; 23];
        let t = calibration_table(&pred, &y).unwrap();
        let ns: Vec<usize> = t.iter().map(|r| r.n).collect();
        assert_eq!(ns, [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]);
        assert!(calibration_table(&pred[..9], &y[..9]).is_err());
    }

    #[test]
    fn perfect_predictions_calibrate() {
        let y: Vec<f64> = (0..100).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
        let t = calibration_table(&y, &y).unwrap();
        for r in t.iter().filter(|r| r.mean_pred == 1.0) {
            assert_eq!(r.obs_rate, 1.0);
        }
    }

    #[test]
    fn hl_warning_threshold() {
        let pred: Vec<f64> = (0..30).map(|i| 0.1 + i as f64 / 100.0).collect();
        let y: Vec<f64> = (0..30).map(|i| f64::from(u8::from(i % 4 == 0))).collect();
        assert!(!hosmer_lemeshow(&pred, &y, 10).unwrap().large_n_warning);
        assert_eq!(hosmer_lemeshow(&pred, &y, 10).unwrap().dof, 8);
        assert!(hosmer_lemeshow(&[0.2; 30], &y, 10).is_err());
    }

    #[test]
    fn roc_ends_at_corner() {
        let pts = roc_points(&[0.9, 0.3, 0.3, 0.1], &[1.0, 0.0, 1.0, 0.0]);
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(pts.len(), 4);
    }
}
