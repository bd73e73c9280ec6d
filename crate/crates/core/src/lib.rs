//! Prognostic risk-model pipeline over primary-care EMR extracts: ingest,
//! case definitions, data quality, cohort construction, multiple
//! imputation, model fitting, and evaluation.

pub mod cohort;
pub mod definitions;
pub mod evaluation;
pub mod fixtures;
pub mod frame;
pub mod imputation;
pub mod modeling;
pub mod quality;
pub mod stats;
pub mod store;
pub mod synth;
