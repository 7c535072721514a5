use thiserror::Error;

use crate::data::ValidationReport;

/// Errors raised while reading, writing, or constructing panel data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("schema mismatch in {file}: {message}")]
    Schema { file: String, message: String },
    #[error("unknown-subject: events.csv line {line} references subject '{subject_id}' absent from baselines")]
    UnknownSubject { line: u64, subject_id: String },
    #[error("dataset failed validation:\n{0}")]
    Invalid(ValidationReport),
}

/// Errors raised by the model fitters (visit, observation, longitudinal, LME).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("no events available to fit the {0} model")]
    NoEvents(&'static str),
    #[error("non-identifiable visiting covariates: {0}")]
    NonIdentifiable(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("zero exposure: sum of exp(2 gamma'W) Lambda0(C)^2 is zero")]
    ZeroExposure,
    #[error("separation in observation model: |alpha| exceeded {0}")]
    Separation(f64),
    #[error("degenerate observation process: {0}")]
    Degenerate(&'static str),
    #[error("singular estimating-equation system (condition number {0:e})")]
    SingularSystem(f64),
    #[error("time cannot be a fixed effect for {0}: its centered estimating equation is identically zero")]
    TimeNotIdentifiable(String),
    #[error("collinear fixed-effect design (condition number {0:e})")]
    Collinear(f64),
    #[error("too few subjects: {subjects} available for {parameters} parameters")]
    TooFewSubjects { subjects: usize, parameters: usize },
    #[error("no recorded measurements in the dataset")]
    NoMeasurements,
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

impl FitError {
    /// Stable short tag, used for failure tallies and exit codes.
    pub fn kind(&self) -> &'static str {
        match self {
            FitError::NoEvents(_) => "no_events",
            FitError::NonIdentifiable(_) => "non_identifiable",
            FitError::NotConverged { .. } => "not_converged",
            FitError::ZeroExposure => "zero_exposure",
            FitError::Separation(_) => "separation",
            FitError::Degenerate(_) => "degenerate",
            FitError::SingularSystem(_) => "singular_system",
            FitError::TimeNotIdentifiable(_) => "time_not_identifiable",
            FitError::Collinear(_) => "collinear",
            FitError::TooFewSubjects { .. } => "too_few_subjects",
            FitError::NoMeasurements => "no_measurements",
            FitError::InvalidDesign(_) => "invalid_design",
        }
    }
}

/// Errors raised by the simulation generators.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config field '{field}': {message}")]
    InvalidConfig { field: String, message: String },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Errors raised by the bootstrap and replication harness.
#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("n_boot = {0} is below the minimum of 50 resamples")]
    TooFewBoot(usize),
    #[error("all {0} bootstrap resamples failed")]
    AllResamplesFailed(usize),
    #[error("point estimate failed: {0}")]
    PointFit(#[from] FitError),
    #[error("n_reps = {0} is below the minimum of 2 replications")]
    TooFewReps(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}
