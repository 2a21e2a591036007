//! Synthesis backends turning printing conditions into droplet images.

mod replay;
mod sim;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::raster::Raster;
use crate::raster::RasterError;
use crate::sampling::PrintConditions;

pub use replay::{replay_print, ReplayPrinter, ReplayRequest, POLL_INTERVAL};
pub use sim::{simulate_print, simulate_print_with_centers, SimPrinter, SimPrinterConfig};

#[derive(Debug, Error)]
pub enum PrinterError {
    #[error("printer configuration error: {0}")]
    Config(String),
    #[error("no response image for request `{id}` after {waited:?}")]
    SynthesisTimeout { id: String, waited: Duration },
    #[error("unreadable response image {path}: {source}")]
    Format {
        path: String,
        #[source]
        source: RasterError,
    },
    #[error("conditions {0:?} are outside the printer's parameter box")]
    OutOfBounds(PrintConditions),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Wall-clock split of one synthesis, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTimings {
    pub setup: f64,
    pub print: f64,
    pub image: f64,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub raster: Raster,
    pub timings: SynthesisTimings,
}

/// Fixed delays added to each synthesis phase, emulating slow hardware.
/// All zero by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareDelays {
    pub setup_s: f64,
    pub print_s: f64,
    pub image_s: f64,
}

impl HardwareDelays {
    fn sleep(seconds: f64) {
        if seconds > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(seconds));
        }
    }
}

/// A synthesis backend; one request in flight at a time.
pub trait Printer {
    fn synthesize(&mut self, cond: &PrintConditions) -> Result<Synthesis, PrinterError>;
}

impl<P: Printer + ?Sized> Printer for Box<P> {
    fn synthesize(&mut self, cond: &PrintConditions) -> Result<Synthesis, PrinterError> {
        (**self).synthesize(cond)
    }
}
