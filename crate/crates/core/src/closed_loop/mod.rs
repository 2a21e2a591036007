//! The optimize-in-loop driver: initialize, then train, suggest,
//! synthesize, score and append until the suggestions stop moving.

mod fields;
mod ledger;
mod proposer;
mod run;

pub use fields::{loss_delta_field, manifold_1d, Manifold1d, ManifoldCurve, MANIFOLD_BANDWIDTH};
pub use ledger::{prediction_rmse, RmseReport, RunLedger, StepTimings, TimingRecord, UpdateRecord, LEDGER_SCHEMA};
pub use proposer::{ArchivedModel, BoProposer, FixedProposer, IngestTimings, Proposal, Proposer, SgdProposer};
pub use run::{run, Init, NoObserver, RunFailure, RunObserver, RunOutcome, RunSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::SgdError;
use crate::printer::PrinterError;
use crate::raster::Raster;
use crate::sampling::{PrintConditions, SamplingError, DIMS};
use crate::surrogate::SurrogateError;
use crate::vision::LossScore;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Printer(#[from] PrinterError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Sgd(#[from] SgdError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("no archived model for update {0}")]
    MissingModel(usize),
    #[error("malformed ledger: {0}")]
    Ledger(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Bo,
    Sgd,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Bo => "bo",
            Optimizer::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initialization,
    Suggested,
}

/// One synthesized and scored print. `update_index` is 0 for
/// initialization samples.
#[derive(Debug, Clone)]
pub struct Sample {
    pub conditions: PrintConditions,
    pub image: Raster,
    pub score: LossScore,
    pub origin: Origin,
    pub update_index: usize,
}

/// Stop once the last `repeats` suggestions agree within `tol` in every
/// unit-cube coordinate; give up after `max_updates`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergencePolicy {
    pub tol: f64,
    pub repeats: usize,
    pub max_updates: usize,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            repeats: 2,
            max_updates: 10,
        }
    }
}

impl ConvergencePolicy {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.tol.is_finite() && self.tol > 0.0 && self.repeats >= 2 && self.max_updates >= self.repeats {
            Ok(())
        } else {
            Err(LoopError::Argument(format!(
                "convergence policy needs tol > 0, repeats >= 2 and max_updates >= repeats, got {self:?}"
            )))
        }
    }

    /// Whether the trailing `repeats` points all lie within `tol` of the
    /// last one, coordinate by coordinate.
    pub fn is_converged(&self, suggestions: &[[f64; DIMS]]) -> bool {
        if suggestions.len() < self.repeats {
            return false;
        }
        let tail = &suggestions[suggestions.len() - self.repeats..];
        let last = tail[tail.len() - 1];
        tail.iter()
            .all(|u| u.iter().zip(&last).all(|(a, b)| (a - b).abs() <= self.tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_validation() {
        assert!(ConvergencePolicy::default().validate().is_ok());
        for bad in [
            ConvergencePolicy { tol: 0.0, ..Default::default() },
            ConvergencePolicy { repeats: 1, ..Default::default() },
            ConvergencePolicy { max_updates: 1, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn convergence_needs_the_whole_tail_close() {
        let p = ConvergencePolicy { repeats: 3, ..Default::default() };
        let a = [0.2, 0.5, 0.7];
        let near = [0.2005, 0.5, 0.6995];
        let far = [0.202, 0.5, 0.7];
        assert!(!p.is_converged(&[a, a]));
        assert!(p.is_converged(&[far, a, near, a]));
        assert!(!p.is_converged(&[a, far, a, a]));
    }
}
