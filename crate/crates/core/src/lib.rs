//! Closed-loop optimisation of droplet printing conditions.

pub mod baseline;
pub mod closed_loop;
pub mod export;
pub mod printer;
pub mod raster;
pub mod sampling;
pub mod surrogate;
pub mod vision;

pub use raster::{Raster, RasterError, Transform};
pub use sampling::{lhs_sample, ParameterSpace, PrintConditions};
