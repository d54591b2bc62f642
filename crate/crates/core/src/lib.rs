pub mod adversary;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod learner;
pub mod loss;
pub mod oracle;
pub mod output;
pub mod perturbation;
pub mod saddle;

pub use domain::{effective_dimension, l1_distance, BoxDomain, Point};
pub use error::{Error, Result};
pub use loss::{lipschitz_audit, AuditReport, HingeLoss, LossFunction, LossKind};
pub use oracle::{
    contract_check, grid_minimize, local_search_minimize, pwl1d_minimize, CumulativeObjective,
    Oracle, OracleAnswer, OracleGuarantee, OracleQuery,
};
pub use perturbation::{sample_perturbation, ExpPerturbation, Stream};
pub use learner::{
    default_eta, make_guess, GuessStrategy, LearnerConfig, LearnerState, PerturbationMode,
    Prediction, Variant,
};
