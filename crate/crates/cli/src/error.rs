use std::path::{Path, PathBuf};

use ehrjoint::{DataError, FitError, InferenceError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(#[from] SimError),
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Fit(#[from] FitError),
    #[error("{0}")]
    Inference(InferenceError),
    #[error("dataset failed validation")]
    Invalid,
    #[error("thread pool: {0}")]
    Pool(String),
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::PointFit(f) => CliError::Fit(f),
            InferenceError::Sim(s) => CliError::Config(s),
            InferenceError::TooFewBoot(_) | InferenceError::TooFewReps(_) => CliError::Usage(e.to_string()),
            other => CliError::Inference(other),
        }
    }
}

/// Exit code per fit error kind, in `FitError::kind` order.
pub const FIT_CODES: [(&str, i32); 12] = [
    ("no_events", 10),
    ("non_identifiable", 11),
    ("not_converged", 12),
    ("zero_exposure", 13),
    ("separation", 14),
    ("degenerate", 15),
    ("singular_system", 16),
    ("time_not_identifiable", 17),
    ("collinear", 18),
    ("too_few_subjects", 19),
    ("no_measurements", 20),
    ("invalid_design", 21),
];

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
   0  success
   1  internal error (thread pool)
   2  usage or configuration error (flags, unknown method, config/design JSON)
   3  I/O error
   4  data error (CSV parse, schema, validation)
   5  bootstrap failed on every resample
  10  no events            11  non-identifiable visiting covariates
  12  not converged        13  zero exposure
  14  separation           15  degenerate observation process
  16  singular system      17  time fixed effect not identifiable
  18  collinear design     19  too few subjects
  20  no measurements      21  invalid design";

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Json { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Data(DataError::Io { .. }) => 3,
            CliError::Data(_) | CliError::Invalid => 4,
            CliError::Inference(_) => 5,
            CliError::Fit(f) => FIT_CODES.iter().find(|(k, _)| *k == f.kind()).map(|(_, c)| *c).unwrap_or(1),
            CliError::Pool(_) => 1,
        }
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
