use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sampling::{ParameterSpace, PrintConditions, DIMS};

use super::kernel::{matern52, Hyperparameters};
use super::SurrogateError;

/// How the configured jitter enters the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterRole {
    /// Added to the kernel diagonal as observation-noise variance.
    #[default]
    DiagonalNoise,
    /// Subtracted from the incumbent in EI (exploration margin); the
    /// diagonal then only carries [`OFFSET_ROLE_NOISE`].
    AcquisitionOffset,
}

pub const OFFSET_ROLE_NOISE: f64 = 1e-6;
const ESCALATIONS: u32 = 3;
const NM_STEP: f64 = 0.5;
const NM_MAX_ITERS: u64 = 300;
const OUT_OF_BOX_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub jitter: f64,
    pub jitter_role: JitterRole,
    pub restarts: usize,
    pub seed: u64,
    /// Range the initial lengthscales are drawn from, log-uniformly.
    pub lengthscale_init: (f64, f64),
    pub variance_init: (f64, f64),
    /// Box the optimizer is confined to.
    pub lengthscale_bounds: (f64, f64),
    pub variance_bounds: (f64, f64),
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            jitter: 0.01,
            jitter_role: JitterRole::DiagonalNoise,
            restarts: 8,
            seed: 0,
            lengthscale_init: (0.05, 2.0),
            variance_init: (0.1, 2.0),
            lengthscale_bounds: (1e-2, 1e2),
            variance_bounds: (1e-4, 1e2),
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        let ok = self.jitter.is_finite()
            && self.jitter >= 0.0
            && self.restarts >= 1
            && [
                self.lengthscale_init,
                self.variance_init,
                self.lengthscale_bounds,
                self.variance_bounds,
            ]
            .into_iter()
            .all(range_ok);
        if ok {
            Ok(())
        } else {
            Err(SurrogateError::Argument(format!("invalid GP configuration {self:?}")))
        }
    }

    fn diagonal(&self) -> f64 {
        match self.jitter_role {
            JitterRole::DiagonalNoise => self.jitter,
            JitterRole::AcquisitionOffset => OFFSET_ROLE_NOISE,
        }
    }

    fn ei_offset(&self) -> f64 {
        match self.jitter_role {
            JitterRole::DiagonalNoise => 0.0,
            JitterRole::AcquisitionOffset => self.jitter,
        }
    }
}

/// One multi-start run of the marginal-likelihood search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub initial: Hyperparameters,
    pub initial_lml: f64,
    pub selected: Hyperparameters,
    pub selected_lml: f64,
}

/// Posterior of the latent function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

struct Factor {
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    noise: f64,
}

/// Cholesky of `K + noise I`, escalating `noise` tenfold up to three times.
fn factorize(x: &[[f64; DIMS]], y_centred: &DVector<f64>, hp: &Hyperparameters, noise: f64) -> Option<Factor> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], hp));
    let mut noise = noise;
    for attempt in 0..=ESCALATIONS {
        if attempt > 0 {
            noise = if noise > 0.0 { noise * 10.0 } else { 1e-10 };
        }
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += noise;
        }
        if let Some(chol) = m.cholesky() {
            let alpha = chol.solve(y_centred);
            return Some(Factor {
                l: chol.unpack(),
                alpha,
                noise,
            });
        }
    }
    None
}

fn lml_of(f: &Factor, y_centred: &DVector<f64>) -> f64 {
    let n = y_centred.len() as f64;
    let log_det: f64 = f.l.diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * y_centred.dot(&f.alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

#[derive(Clone)]
struct NegLml<'a> {
    x: &'a [[f64; DIMS]],
    y: &'a DVector<f64>,
    noise: f64,
    lo: [f64; DIMS + 1],
    hi: [f64; DIMS + 1],
}

impl NegLml<'_> {
    /// Clamps into the log box; returns the clamped point and its squared
    /// distance from the input.
    fn clamp(&self, t: &[f64]) -> (Vec<f64>, f64) {
        let mut out = t.to_vec();
        let mut excess = 0.0;
        for i in 0..=DIMS {
            let c = t[i].clamp(self.lo[i], self.hi[i]);
            excess += (t[i] - c) * (t[i] - c);
            out[i] = c;
        }
        (out, excess)
    }

    fn eval(&self, t: &[f64]) -> f64 {
        let (c, excess) = self.clamp(t);
        let hp = Hyperparameters::from_log(&c);
        match factorize(self.x, self.y, &hp, self.noise) {
            Some(f) => -lml_of(&f, self.y) + OUT_OF_BOX_PENALTY * excess,
            None => f64::MAX,
        }
    }
}

impl CostFunction for NegLml<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, ArgminError> {
        Ok(self.eval(p))
    }
}

/// Gaussian-process surrogate over the unit-cube image of a
/// [`ParameterSpace`], with constant prior mean equal to the mean target.
///
/// Training points are kept in a canonical (sorted) order, so the model and
/// everything derived from it do not depend on the order they were given in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GpSnapshot", try_from = "GpSnapshot")]
pub struct GpModel {
    space: ParameterSpace,
    config: GpConfig,
    train_x: Vec<[f64; DIMS]>,
    train_y: Vec<f64>,
    hyper: Hyperparameters,
    prior_mean: f64,
    noise: f64,
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    lml: f64,
    restarts: Vec<RestartRecord>,
}

/// Serialized form of a [`GpModel`]; the factorization is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub space: ParameterSpace,
    pub config: GpConfig,
    /// Training inputs in unit-cube coordinates.
    pub train_x: Vec<[f64; DIMS]>,
    pub train_y: Vec<f64>,
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub restarts: Vec<RestartRecord>,
}

impl From<GpModel> for GpSnapshot {
    fn from(m: GpModel) -> Self {
        Self {
            train_x: m.train_x,
            train_y: m.train_y,
            space: m.space,
            config: m.config,
            hyperparameters: m.hyper,
            restarts: m.restarts,
        }
    }
}

impl TryFrom<GpSnapshot> for GpModel {
    type Error = SurrogateError;

    fn try_from(s: GpSnapshot) -> Result<Self, Self::Error> {
        s.config.validate()?;
        let hyper = Hyperparameters::new(s.hyperparameters.lengthscales, s.hyperparameters.signal_variance)?;
        let ok = !s.train_x.is_empty()
            && s.train_x.len() == s.train_y.len()
            && s.train_y.iter().all(|y| y.is_finite())
            && s.train_x.iter().flatten().all(|v| v.is_finite());
        if !ok {
            return Err(SurrogateError::Argument("malformed model snapshot".into()));
        }
        let mut m = GpModel::assemble(&s.space, &s.config, s.train_x, s.train_y, hyper)?;
        m.restarts = s.restarts;
        Ok(m)
    }
}

fn prepare(
    train: &[(PrintConditions, f64)],
    space: &ParameterSpace,
    min_points: usize,
) -> Result<(Vec<[f64; DIMS]>, Vec<f64>), SurrogateError> {
    if train.len() < min_points {
        return Err(SurrogateError::Argument(format!(
            "need at least {min_points} training points, got {}",
            train.len()
        )));
    }
    let mut rows = Vec::with_capacity(train.len());
    for (c, y) in train {
        let finite = y.is_finite() && c.to_array().iter().all(|v| v.is_finite());
        if !finite {
            return Err(SurrogateError::Argument(format!("non-finite training row {c:?} -> {y}")));
        }
        rows.push((space.normalize(c), *y));
    }
    rows.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.total_cmp(&b.1))
    });
    Ok(rows.into_iter().unzip())
}

impl GpModel {
    /// Selects hyperparameters by maximizing the log marginal likelihood
    /// from `config.restarts` seeded starting points, then factorizes.
    pub fn fit(
        train: &[(PrintConditions, f64)],
        space: &ParameterSpace,
        config: &GpConfig,
    ) -> Result<Self, SurrogateError> {
        config.validate()?;
        let (x, y) = prepare(train, space, 2)?;
        let prior_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        let (llo, lhi) = config.lengthscale_bounds;
        let (vlo, vhi) = config.variance_bounds;
        let objective = NegLml {
            x: &x,
            y: &yc,
            noise: config.diagonal(),
            lo: [llo.ln(), llo.ln(), llo.ln(), vlo.ln()],
            hi: [lhi.ln(), lhi.ln(), lhi.ln(), vhi.ln()],
        };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo.ln()
            } else {
                rng.random_range(lo.ln()..hi.ln())
            }
        };
        let mut restarts = Vec::with_capacity(config.restarts);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..config.restarts {
            let mut t0: Vec<f64> = (0..DIMS).map(|_| log_uniform(&mut rng, config.lengthscale_init)).collect();
            t0.push(log_uniform(&mut rng, config.variance_init));
            let (t0, _) = objective.clamp(&t0);
            let initial_cost = objective.eval(&t0);

            let mut simplex = vec![t0.clone()];
            for i in 0..=DIMS {
                let mut v = t0.clone();
                v[i] += NM_STEP;
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-9)
                .map_err(|e| SurrogateError::Argument(e.to_string()))?;
            let state = Executor::new(objective.clone(), solver)
                .configure(|s| s.max_iters(NM_MAX_ITERS))
                .run()
                .map_err(|e| SurrogateError::Argument(e.to_string()))?
                .state()
                .clone();
            let mut sel = state.get_best_param().cloned().unwrap_or_else(|| t0.clone());
            sel = objective.clamp(&sel).0;
            let mut sel_cost = objective.eval(&sel);
            if sel_cost > initial_cost {
                sel = t0.clone();
                sel_cost = initial_cost;
            }
            restarts.push(RestartRecord {
                initial: Hyperparameters::from_log(&t0),
                initial_lml: -initial_cost,
                selected: Hyperparameters::from_log(&sel),
                selected_lml: -sel_cost,
            });
            if best.as_ref().is_none_or(|(c, _)| sel_cost < *c) {
                best = Some((sel_cost, sel));
            }
        }
        let (_, t) = best.expect("at least one restart");
        let hyper = Hyperparameters::from_log(&t);
        let mut model = Self::assemble(space, config, x, y, hyper)?;
        model.restarts = restarts;
        Ok(model)
    }

    /// Factorizes with fixed hyperparameters; accepts a single point.
    pub fn with_hyperparameters(
        train: &[(PrintConditions, f64)],
        space: &ParameterSpace,
        hyper: Hyperparameters,
        config: &GpConfig,
    ) -> Result<Self, SurrogateError> {
        config.validate()?;
        let hyper = Hyperparameters::new(hyper.lengthscales, hyper.signal_variance)?;
        let (x, y) = prepare(train, space, 1)?;
        Self::assemble(space, config, x, y, hyper)
    }

    fn assemble(
        space: &ParameterSpace,
        config: &GpConfig,
        x: Vec<[f64; DIMS]>,
        y: Vec<f64>,
        hyper: Hyperparameters,
    ) -> Result<Self, SurrogateError> {
        let prior_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        let f = factorize(&x, &yc, &hyper, config.diagonal()).ok_or(SurrogateError::Conditioning {
            jitter: config.diagonal(),
            escalations: ESCALATIONS,
        })?;
        let lml = lml_of(&f, &yc);
        Ok(Self {
            space: space.clone(),
            config: config.clone(),
            train_x: x,
            train_y: y,
            hyper,
            prior_mean,
            noise: f.noise,
            l: f.l,
            alpha: f.alpha,
            lml,
            restarts: Vec::new(),
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.hyper
    }

    /// Diagonal term actually used, after any escalation.
    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn restarts(&self) -> &[RestartRecord] {
        &self.restarts
    }

    /// Amount subtracted from the incumbent before computing EI.
    pub fn ei_offset(&self) -> f64 {
        self.config.ei_offset()
    }

    /// Training inputs in canonical order, unit-cube coordinates.
    pub fn train_x(&self) -> &[[f64; DIMS]] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn training_set(&self) -> Vec<(PrintConditions, f64)> {
        self.train_x
            .iter()
            .zip(&self.train_y)
            .map(|(u, y)| (self.space.denormalize(*u), *y))
            .collect()
    }

    pub fn best_observed(&self) -> f64 {
        self.train_y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Log marginal likelihood of the training data under `hyper`, or
    /// `None` when the kernel matrix cannot be factorized.
    pub fn log_marginal_likelihood_at(&self, hyper: &Hyperparameters) -> Option<f64> {
        let yc = DVector::from_iterator(self.train_y.len(), self.train_y.iter().map(|v| v - self.prior_mean));
        factorize(&self.train_x, &yc, hyper, self.config.diagonal()).map(|f| lml_of(&f, &yc))
    }

    /// `max |(K + noise I) - L L^T|`.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.train_x.len();
        let llt = &self.l * self.l.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut k = matern52(&self.train_x[i], &self.train_x[j], &self.hyper);
                if i == j {
                    k += self.noise;
                }
                worst = worst.max((k - llt[(i, j)]).abs());
            }
        }
        worst
    }

    pub fn predict_unit(&self, u: &[f64; DIMS]) -> Prediction {
        let n = self.train_x.len();
        let ks = DVector::from_fn(n, |i, _| matern52(u, &self.train_x[i], &self.hyper));
        let mean = self.prior_mean + ks.dot(&self.alpha);
        let v = self
            .l
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let var = self.hyper.signal_variance - v.norm_squared();
        Prediction {
            mean,
            std: var.max(0.0).sqrt(),
        }
    }

    pub fn predict(&self, c: &PrintConditions) -> Prediction {
        self.predict_unit(&self.space.normalize(c))
    }
}
