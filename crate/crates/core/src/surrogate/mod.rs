//! Gaussian-process surrogate (Matérn 5/2, ARD) with expected-improvement
//! acquisition.

mod acquisition;
mod gp;
mod kernel;

pub(crate) use acquisition::lex_cmp;
pub use acquisition::{
    acquisition_field, candidate_pool, expected_improvement_from, normal_cdf, normal_pdf, suggest,
    AcquisitionField, GridField, Projection, SuggestConfig, Suggestion, CROSS_SECTIONS,
};
pub use gp::{GpConfig, GpModel, GpSnapshot, JitterRole, Prediction, RestartRecord, OFFSET_ROLE_NOISE};
pub use kernel::{kernel, Hyperparameters};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("kernel matrix not positive definite with jitter {jitter} after {escalations} tenfold escalations")]
    Conditioning { jitter: f64, escalations: u32 },
}
