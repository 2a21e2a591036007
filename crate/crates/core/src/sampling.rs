//! Printing-condition space, Latin hypercube initialization and uniform
//! candidate pools.
//!
//! All sampling happens in the unit cube and is mapped back onto the
//! [`ParameterSpace`] box, so the stratification guarantees of the Latin
//! hypercube hold for every dimension regardless of its physical units.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of tunable printer parameters.
pub const DIMS: usize = 3;

/// Keeps a stratified draw strictly inside its stratum after the
/// unit-cube round trip.
const STRATUM_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid bounds for `{name}`: low {low} must be finite and below high {high}")]
    Bounds { name: String, low: f64, high: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// One printer setting: jetting pressure, valve actuation frequency and
/// nozzle translation speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintConditions {
    /// Jetting pressure in MPa.
    #[serde(rename = "pressure_mpa")]
    pub pressure: f64,
    /// Valve actuation frequency in Hz.
    #[serde(rename = "frequency_hz")]
    pub frequency: f64,
    /// Nozzle translation speed in mm/s.
    #[serde(rename = "speed_mm_s")]
    pub speed: f64,
}

impl PrintConditions {
    pub fn new(pressure: f64, frequency: f64, speed: f64) -> Self {
        Self {
            pressure,
            frequency,
            speed,
        }
    }

    pub fn to_array(self) -> [f64; DIMS] {
        [self.pressure, self.frequency, self.speed]
    }

    pub fn from_array(v: [f64; DIMS]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// A named, bounded axis of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub unit: String,
}

impl Dimension {
    pub fn new(name: &str, low: f64, high: f64, unit: &str) -> Self {
        Self {
            name: name.to_owned(),
            low,
            high,
            unit: unit.to_owned(),
        }
    }

    fn validate(&self) -> Result<(), SamplingError> {
        if self.low.is_finite() && self.high.is_finite() && self.low < self.high {
            Ok(())
        } else {
            Err(SamplingError::Bounds {
                name: self.name.clone(),
                low: self.low,
                high: self.high,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Axis-aligned box over (pressure, frequency, speed), in that order.
///
/// The defaults are wider than the nominal hardware ranges so that
/// every row of the reference initialization table and both reported
/// optima sit inside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Dimension; DIMS]", into = "[Dimension; DIMS]")]
pub struct ParameterSpace {
    dims: [Dimension; DIMS],
}

impl Default for ParameterSpace {
    fn default() -> Self {
        Self {
            dims: [
                Dimension::new("pressure", 0.02, 0.15, "MPa"),
                Dimension::new("frequency", 15.0, 40.0, "Hz"),
                Dimension::new("speed", 100.0, 900.0, "mm/s"),
            ],
        }
    }
}

impl TryFrom<[Dimension; DIMS]> for ParameterSpace {
    type Error = SamplingError;

    fn try_from(dims: [Dimension; DIMS]) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<ParameterSpace> for [Dimension; DIMS] {
    fn from(space: ParameterSpace) -> Self {
        space.dims
    }
}

impl ParameterSpace {
    pub fn new(dims: [Dimension; DIMS]) -> Result<Self, SamplingError> {
        for d in &dims {
            d.validate()?;
        }
        Ok(Self { dims })
    }

    /// Builds a space with the default names and units from raw bounds.
    pub fn from_bounds(bounds: [(f64, f64); DIMS]) -> Result<Self, SamplingError> {
        let mut dims = Self::default().dims;
        for (d, (low, high)) in dims.iter_mut().zip(bounds) {
            d.low = low;
            d.high = high;
        }
        Self::new(dims)
    }

    pub fn dims(&self) -> &[Dimension; DIMS] {
        &self.dims
    }

    pub fn lows(&self) -> [f64; DIMS] {
        std::array::from_fn(|i| self.dims[i].low)
    }

    pub fn highs(&self) -> [f64; DIMS] {
        std::array::from_fn(|i| self.dims[i].high)
    }

    /// Affine map of the box onto the unit cube.
    pub fn normalize(&self, c: &PrintConditions) -> [f64; DIMS] {
        let v = c.to_array();
        std::array::from_fn(|i| (v[i] - self.dims[i].low) / self.dims[i].width())
    }

    pub fn denormalize(&self, u: [f64; DIMS]) -> PrintConditions {
        PrintConditions::from_array(std::array::from_fn(|i| {
            self.dims[i].low + u[i] * self.dims[i].width()
        }))
    }

    /// Closed-box membership.
    pub fn contains(&self, c: &PrintConditions) -> bool {
        c.to_array()
            .iter()
            .zip(&self.dims)
            .all(|(v, d)| *v >= d.low && *v <= d.high)
    }

    /// Projects a point onto the box.
    pub fn clamp(&self, c: &PrintConditions) -> PrintConditions {
        let v = c.to_array();
        PrintConditions::from_array(std::array::from_fn(|i| {
            v[i].clamp(self.dims[i].low, self.dims[i].high)
        }))
    }

    /// The 2^3 vertices of the box, ordered lexicographically in the
    /// normalized coordinates.
    pub fn corners(&self) -> Vec<PrintConditions> {
        (0..1usize << DIMS)
            .map(|mask| {
                let u = std::array::from_fn(|i| ((mask >> (DIMS - 1 - i)) & 1) as f64);
                self.denormalize(u)
            })
            .collect()
    }
}

/// Latin hypercube design of `n` points, uniformly jittered inside each
/// stratum, with an independent stratum permutation per dimension.
pub fn lhs_sample(
    space: &ParameterSpace,
    n: usize,
    seed: u64,
) -> Result<Vec<PrintConditions>, SamplingError> {
    if n == 0 {
        return Err(SamplingError::Argument("LHS sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..DIMS)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();

    let points = (0..n)
        .map(|i| {
            let u = std::array::from_fn(|d| {
                let offset: f64 = rng.random::<f64>().clamp(STRATUM_MARGIN, 1.0 - STRATUM_MARGIN);
                (perms[d][i] as f64 + offset) / n as f64
            });
            space.denormalize(u)
        })
        .collect();
    Ok(points)
}

/// Unit-cube points drawn i.i.d. uniformly; the raw form of
/// [`uniform_candidates`].
pub fn uniform_unit(m: usize, seed: u64) -> Vec<[f64; DIMS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect()
}

/// `m` i.i.d. uniform points in the box.
pub fn uniform_candidates(
    space: &ParameterSpace,
    m: usize,
    seed: u64,
) -> Result<Vec<PrintConditions>, SamplingError> {
    if m == 0 {
        return Err(SamplingError::Argument("candidate pool must not be empty".into()));
    }
    Ok(uniform_unit(m, seed)
        .into_iter()
        .map(|u| space.clamp(&space.denormalize(u)))
        .collect())
}
