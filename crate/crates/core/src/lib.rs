//! Joint estimation of longitudinal biomarker effects under informative visiting
//! and informative observation, with comparator estimators and a simulation harness.

pub mod data;
pub mod design;
pub mod error;
pub mod fit;
pub mod inference;
pub mod joint;
pub mod linalg;
pub mod lme;
pub mod method;
pub mod obs;
pub mod rng;
pub mod sim;
pub mod visit;

pub use data::{PanelDataset, Subject, SubjectBaseline, SubjectId, ValidationReport, VisitEvent};
pub use design::DesignSpec;
pub use error::{DataError, FitError, InferenceError, SimError};
pub use fit::{fit_method, Estimate, Estimator};
pub use inference::{bootstrap, run_replications, BootstrapResult, ReplicationReport};
pub use joint::{fit_adapted_liang, fit_ehrjoint, fit_iirr, fit_jmvl_liang, fit_jmvl_ly, JointFitResult};
pub use lme::{fit_lme, LmeFit, LmeVariant};
pub use method::Method;
pub use obs::ObsModelFit;
pub use sim::{generate, generate_with_truth, SimConfig, Simulator, Truth};
pub use visit::{StepFunction, VisitModelFit};
