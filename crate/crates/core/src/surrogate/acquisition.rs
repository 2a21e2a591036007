use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::sampling::{uniform_unit, ParameterSpace, PrintConditions, DIMS};

use super::gp::GpModel;
use super::SurrogateError;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `E[max(0, f* - F)]` for `F ~ N(mean, std^2)`; zero when `std` is zero.
pub fn expected_improvement_from(mean: f64, std: f64, f_star: f64) -> f64 {
    if !(std > 0.0) {
        return 0.0;
    }
    let z = (f_star - mean) / std;
    (std * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
}

impl GpModel {
    pub fn expected_improvement_unit(&self, u: &[f64; DIMS], f_star: f64) -> f64 {
        let p = self.predict_unit(u);
        expected_improvement_from(p.mean, p.std, f_star - self.ei_offset())
    }

    pub fn expected_improvement(&self, c: &PrintConditions, f_star: f64) -> f64 {
        self.expected_improvement_unit(&self.space().normalize(c), f_star)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuggestConfig {
    pub n_candidates: usize,
    /// Gaussian perturbations drawn around each training point.
    pub perturbations_per_point: usize,
    /// Their standard deviation, unit-cube coordinates.
    pub perturbation_scale: f64,
    pub seed: u64,
}

impl Default for SuggestConfig {
    fn default() -> Self {
        Self {
            n_candidates: 10_000,
            perturbations_per_point: 32,
            perturbation_scale: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub conditions: PrintConditions,
    pub normalized: [f64; DIMS],
    pub predicted_loss: f64,
    pub predicted_std: f64,
    pub expected_improvement: f64,
}

/// Lexicographic order on unit-cube vectors.
pub(crate) fn lex_cmp(a: &[f64; DIMS], b: &[f64; DIMS]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Uniform points, the training inputs, then clamped perturbations of them.
pub fn candidate_pool(model: &GpModel, cfg: &SuggestConfig) -> Vec<[f64; DIMS]> {
    let mut pool = uniform_unit(cfg.n_candidates, cfg.seed);
    pool.extend_from_slice(model.train_x());
    if cfg.perturbations_per_point > 0 && cfg.perturbation_scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_9e27);
        let step = Normal::new(0.0, cfg.perturbation_scale).expect("positive scale");
        for x in model.train_x() {
            for _ in 0..cfg.perturbations_per_point {
                pool.push(x.map(|v| (v + step.sample(&mut rng)).clamp(0.0, 1.0)));
            }
        }
    }
    pool
}

/// The EI maximizer over the candidate pool. Ties go to the lower posterior
/// mean, then the lexicographically smaller point. When no candidate has
/// positive EI the best observed training point is returned.
pub fn suggest(model: &GpModel, f_star: f64, cfg: &SuggestConfig) -> Suggestion {
    let mut best: Option<([f64; DIMS], f64, f64, f64)> = None;
    for u in candidate_pool(model, cfg) {
        let p = model.predict_unit(&u);
        let ei = expected_improvement_from(p.mean, p.std, f_star - model.ei_offset());
        let better = match &best {
            None => true,
            Some((bu, bei, bmean, _)) => ei
                .total_cmp(bei)
                .then(bmean.total_cmp(&p.mean))
                .then(lex_cmp(bu, &u))
                .is_gt(),
        };
        if better {
            best = Some((u, ei, p.mean, p.std));
        }
    }
    let (mut u, ei, mut mean, mut std) = best.expect("pool holds the training points");
    if !(ei > 0.0) {
        let (i, _) = model
            .train_y()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(lex_cmp(&model.train_x()[a.0], &model.train_x()[b.0])))
            .expect("non-empty training set");
        u = model.train_x()[i];
        let p = model.predict_unit(&u);
        (mean, std) = (p.mean, p.std);
    }
    Suggestion {
        conditions: model.space().denormalize(u),
        normalized: u,
        predicted_loss: mean,
        predicted_std: std,
        expected_improvement: ei.max(0.0),
    }
}

/// The three axis pairs plotted as cross-sections:
/// pressure x frequency, frequency x speed, speed x pressure.
pub const CROSS_SECTIONS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Values on a regular grid spanning the unit cube, `counts[d]` points
/// along dimension `d` (ends included). Stored with the last dimension
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub space: ParameterSpace,
    pub counts: [usize; DIMS],
    pub values: Vec<f64>,
}

/// A 2-D max-projection of a [`GridField`]; `values[j * nx + i]` belongs
/// to grid index `i` on `x_axis` and `j` on `y_axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub x_axis: usize,
    pub y_axis: usize,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

pub type AcquisitionField = GridField;

impl GridField {
    /// Evaluates `f` at every grid point.
    pub fn evaluate(
        space: &ParameterSpace,
        counts: [usize; DIMS],
        mut f: impl FnMut(&[f64; DIMS]) -> f64,
    ) -> Result<Self, SurrogateError> {
        if counts.iter().any(|&c| c < 2) {
            return Err(SurrogateError::Argument(format!(
                "grid needs at least 2 points per dimension, got {counts:?}"
            )));
        }
        let mut values = Vec::with_capacity(counts.iter().product());
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for k in 0..counts[2] {
                    values.push(f(&Self::unit_at(counts, [i, j, k])));
                }
            }
        }
        Ok(Self {
            space: space.clone(),
            counts,
            values,
        })
    }

    fn unit_at(counts: [usize; DIMS], idx: [usize; DIMS]) -> [f64; DIMS] {
        [0, 1, 2].map(|d| idx[d] as f64 / (counts[d] - 1) as f64)
    }

    pub fn point(&self, idx: [usize; DIMS]) -> [f64; DIMS] {
        Self::unit_at(self.counts, idx)
    }

    pub fn value(&self, idx: [usize; DIMS]) -> f64 {
        self.values[(idx[0] * self.counts[1] + idx[1]) * self.counts[2] + idx[2]]
    }

    /// Grid index of `u` when it lies exactly on the grid.
    pub fn index_of(&self, u: &[f64; DIMS]) -> Option<[usize; DIMS]> {
        let mut idx = [0; DIMS];
        for d in 0..DIMS {
            let steps = (self.counts[d] - 1) as f64;
            let i = (u[d] * steps).round();
            if !(0.0..=steps).contains(&i) || i / steps != u[d] {
                return None;
            }
            idx[d] = i as usize;
        }
        Some(idx)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum over the dimension not in `(x_axis, y_axis)`.
    pub fn project(&self, x_axis: usize, y_axis: usize) -> Projection {
        assert!(x_axis != y_axis && x_axis < DIMS && y_axis < DIMS);
        let z_axis = 3 - x_axis - y_axis;
        let (nx, ny) = (self.counts[x_axis], self.counts[y_axis]);
        let mut values = vec![f64::NEG_INFINITY; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..self.counts[z_axis] {
                    let mut idx = [0; DIMS];
                    idx[x_axis] = i;
                    idx[y_axis] = j;
                    idx[z_axis] = k;
                    let v = &mut values[j * nx + i];
                    *v = v.max(self.value(idx));
                }
            }
        }
        Projection {
            x_axis,
            y_axis,
            nx,
            ny,
            values,
        }
    }

    pub fn cross_sections(&self) -> Vec<Projection> {
        CROSS_SECTIONS.iter().map(|&(x, y)| self.project(x, y)).collect()
    }
}

impl Projection {
    /// CSV with one `x,y,value` row per cell in physical units, `x` fastest.
    pub fn to_csv(&self, space: &ParameterSpace) -> String {
        let dims = space.dims();
        let (dx, dy) = (&dims[self.x_axis], &dims[self.y_axis]);
        let mut out = format!("{},{},value\n", dx.name, dy.name);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let x = dx.low + i as f64 / (self.nx - 1) as f64 * (dx.high - dx.low);
                let y = dy.low + j as f64 / (self.ny - 1) as f64 * (dy.high - dy.low);
                out.push_str(&format!("{x},{y},{}\n", self.values[j * self.nx + i]));
            }
        }
        out
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Expected improvement over the full grid.
pub fn acquisition_field(
    model: &GpModel,
    f_star: f64,
    counts: [usize; DIMS],
) -> Result<AcquisitionField, SurrogateError> {
    GridField::evaluate(model.space(), counts, |u| model.expected_improvement_unit(u, f_star))
}
