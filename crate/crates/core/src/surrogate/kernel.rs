use serde::{Deserialize, Serialize};

use crate::sampling::DIMS;

use super::SurrogateError;

const SQRT5: f64 = 2.236_067_977_499_79;

/// ARD lengthscales (one per input dimension) and signal variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: [f64; DIMS],
    pub signal_variance: f64,
}

impl Hyperparameters {
    pub fn new(lengthscales: [f64; DIMS], signal_variance: f64) -> Result<Self, SurrogateError> {
        let ok = lengthscales.iter().chain([&signal_variance]).all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(SurrogateError::Argument(format!(
                "hyperparameters must be positive, got lengthscales {lengthscales:?}, variance {signal_variance}"
            )));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
        })
    }

    /// Inverse of the optimizer's `[ln l1, ln l2, ln l3, ln s2]` coordinates.
    pub(crate) fn from_log(t: &[f64]) -> Self {
        Self {
            lengthscales: [t[0].exp(), t[1].exp(), t[2].exp()],
            signal_variance: t[3].exp(),
        }
    }
}

/// Matérn 5/2 with ARD; callers guarantee positive hyperparameters.
pub(crate) fn matern52(a: &[f64; DIMS], b: &[f64; DIMS], hp: &Hyperparameters) -> f64 {
    let d2: f64 = (0..DIMS)
        .map(|i| {
            let t = (a[i] - b[i]) / hp.lengthscales[i];
            t * t
        })
        .sum();
    let d = d2.sqrt();
    hp.signal_variance * (1.0 + SQRT5 * d + 5.0 / 3.0 * d2) * (-SQRT5 * d).exp()
}

/// `s2 (1 + sqrt5 d + 5/3 d^2) exp(-sqrt5 d)` with `d` the lengthscale-
/// weighted distance between `a` and `b`.
pub fn kernel(
    a: &[f64; DIMS],
    b: &[f64; DIMS],
    lengthscales: [f64; DIMS],
    signal_variance: f64,
) -> Result<f64, SurrogateError> {
    let hp = Hyperparameters::new(lengthscales, signal_variance)?;
    Ok(matern52(a, b, &hp))
}
