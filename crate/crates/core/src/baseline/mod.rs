//! Cross-validated ridge regression trained by SGD on augmented sub-image
//! scores, the baseline the GP loop is compared against.

mod augment;
mod ridge;

pub use augment::{
    augment, tiles, AugmentedRecord, AugmentedSet, ScoredCondition, RECORDS_PER_IMAGE, TILE_COLS, TILE_ROWS,
};
pub use ridge::{
    cross_validate, fold_assignment, gradient, objective, sgd_fit, sgd_suggest, CvReport, RidgeModel,
    RidgeSuggestion, SgdConfig, SgdFit, SgdMode,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgdError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("image {width}x{height} is too small for a 2x3 grid of 16 px tiles")]
    ImageSize { width: usize, height: usize },
    #[error("SGD diverged at epoch {epoch} with learning rate {lr}")]
    Divergence { lr: f64, epoch: usize },
}
