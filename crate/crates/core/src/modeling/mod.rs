//! Logistic and additive-spline risk models, Rubin pooling, and model
//! selection over multiply imputed data.

mod artifact;
mod design;
mod logistic;
mod pool;
mod select;
mod spline;

use thiserror::Error;

use crate::frame::FrameError;

pub use design::{
    build_design, default_menu, default_predictors, ColumnMeta, DesignMeta, Family, ModelSpec, SplineParams, Term,
    Transform,
};
pub use logistic::{
    deviance, fit_logistic, fit_penalized, linear_predictor, log_loss, predict, score, FitOptions, FittedModel,
};
pub use artifact::{ModelFile, RiskScore, SEX_CODING};
pub use pool::{pool_rubin, pool_scalar, pool_single, rubin_df, PooledModel, PooledScalar};
pub use select::{rank_candidates, refit_final, select_model, CandidateResult, SelectOptions, Selection};
pub use spline::{max_second_difference, BSplineBasis};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("IRLS did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("quasi-complete separation: coefficient of '{column}' diverges")]
    Separation { column: String },
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("row {row}: '{variable}' is missing; impute before fitting")]
    MissingValue { variable: String, row: usize },
    #[error("row {row}: '{variable}' = {value} is not positive under the log transform; set log_offset (for example 1.0)")]
    NonPositiveLog { variable: String, row: usize, value: f64 },
    #[error("degenerate spline knots for '{variable}': {message}")]
    DegenerateKnots { variable: String, message: String },
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),
    #[error("every candidate failed: {0}")]
    AllCandidatesFailed(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}
