//! Batch front end: JSON run configs, study runners and reference models.

mod catalog;
mod config;
mod run;

pub use catalog::{list_reference_models, reference, ReferenceModel};
pub use config::{validate, Diagnostic, RunConfig, Study, Tolerances};
pub use run::{run, run_study, Assertion, RunOutcome, StudyResult, Summary};

/// Process exit status of the `germgrain` binary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    AssertionFailed = 1,
    ConfigError = 2,
    RuntimeError = 3,
}
