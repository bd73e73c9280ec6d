use framr_core::cohort::CohortError;
use framr_core::definitions::DefinitionError;
use framr_core::evaluation::EvalError;
use framr_core::frame::FrameError;
use framr_core::imputation::ImputeError;
use framr_core::modeling::ModelError;
use framr_core::quality::QualityError;
use framr_core::store::StoreError;
use framr_core::synth::GeneratorError;
use thiserror::Error;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Schema(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DefinitionError> for CliError {
    fn from(e: DefinitionError) -> Self {
        CliError::Config(format!("definitions: {e}"))
    }
}

impl From<QualityError> for CliError {
    fn from(e: QualityError) -> Self {
        match e {
            QualityError::EmptyStore => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::Config(_) | CohortError::Definition(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Config(_) | GeneratorError::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ImputeError> for CliError {
    fn from(e: ImputeError) -> Self {
        match e {
            ImputeError::Config(_) => CliError::Config(e.to_string()),
            ImputeError::Fit { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::RankDeficient(_)
            | ModelError::NonConvergence { .. }
            | ModelError::Separation { .. }
            | ModelError::DegenerateKnots { .. }
            | ModelError::AllCandidatesFailed(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::Degenerate(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
