use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sampling::{uniform_unit, ParameterSpace, PrintConditions, DIMS};

use super::augment::ScoredCondition;
use super::SgdError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgdMode {
    /// One step per record, records visited in a seeded shuffle each epoch.
    #[default]
    Stochastic,
    /// One step per epoch on the full objective.
    FullBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lambdas: Vec<f64>,
    pub folds: usize,
    pub epochs: usize,
    /// Base step size; epoch `e` (from 1) uses `lr / sqrt(e)`.
    pub lr: f64,
    /// Stop once an epoch lowers the objective by at most this fraction;
    /// zero or less runs every epoch.
    pub tolerance: f64,
    pub mode: SgdMode,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lambdas: (0..7).map(|e| 10f64.powi(e - 6)).collect(),
            folds: 10,
            epochs: 200,
            lr: 0.05,
            tolerance: 0.01,
            mode: SgdMode::Stochastic,
            seed: 0,
        }
    }
}

/// Ridge objective `(1/n) sum (y - theta.x - theta0)^2 + lambda |theta|^2`
/// on normalized features; the bias is not penalized.
pub fn objective(data: &[([f64; DIMS], f64)], theta: &[f64; DIMS], theta0: f64, lambda: f64) -> f64 {
    let mse = data
        .iter()
        .map(|(x, y)| {
            let r = y - dot(theta, x) - theta0;
            r * r
        })
        .sum::<f64>()
        / data.len() as f64;
    mse + lambda * dot(theta, theta)
}

/// Gradient of [`objective`] with respect to `(theta, theta0)`.
pub fn gradient(data: &[([f64; DIMS], f64)], theta: &[f64; DIMS], theta0: f64, lambda: f64) -> ([f64; DIMS], f64) {
    let n = data.len() as f64;
    let mut g = theta.map(|t| 2.0 * lambda * t);
    let mut g0 = 0.0;
    for (x, y) in data {
        let r = y - dot(theta, x) - theta0;
        for d in 0..DIMS {
            g[d] -= 2.0 * r * x[d] / n;
        }
        g0 -= 2.0 * r / n;
    }
    (g, g0)
}

fn dot(a: &[f64; DIMS], b: &[f64; DIMS]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdFit {
    pub theta: [f64; DIMS],
    pub theta0: f64,
    pub epochs_run: usize,
    /// Objective before training, then after each epoch.
    pub trace: Vec<f64>,
}

/// Fits `(theta, theta0)` from zero by SGD on normalized features. The
/// penalty is applied as a proximal step, `theta <- (theta - lr g) / (1 +
/// 2 lr lambda)` with `g` the data-term gradient, so large lambdas shrink
/// `theta` towards zero instead of overshooting.
pub fn sgd_fit(data: &[([f64; DIMS], f64)], lambda: f64, cfg: &SgdConfig, seed: u64) -> Result<SgdFit, SgdError> {
    if !(lambda >= 0.0 && lambda.is_finite()) || !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(SgdError::Argument(format!(
            "need lambda >= 0 and lr > 0, got lambda {lambda}, lr {}",
            cfg.lr
        )));
    }
    if data.is_empty() {
        return Err(SgdError::Argument("no training records".into()));
    }
    let mut theta = [0.0; DIMS];
    let mut theta0 = 0.0;
    let initial = objective(data, &theta, theta0, lambda);
    let mut trace = vec![initial];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr / (epoch as f64).sqrt();
        let shrink = 1.0 + 2.0 * lr * lambda;
        match cfg.mode {
            SgdMode::Stochastic => {
                order.shuffle(&mut rng);
                for &i in &order {
                    let (x, y) = &data[i];
                    let r = y - dot(&theta, x) - theta0;
                    for d in 0..DIMS {
                        theta[d] = (theta[d] + lr * 2.0 * r * x[d]) / shrink;
                    }
                    theta0 += lr * 2.0 * r;
                }
            }
            SgdMode::FullBatch => {
                let (g, g0) = gradient(data, &theta, theta0, 0.0);
                for d in 0..DIMS {
                    theta[d] = (theta[d] - lr * g[d]) / shrink;
                }
                theta0 -= lr * g0;
            }
        }
        epochs_run = epoch;
        let j = objective(data, &theta, theta0, lambda);
        if !j.is_finite() || j > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(SgdError::Divergence { lr: cfg.lr, epoch });
        }
        let prev = *trace.last().expect("trace starts with the initial value");
        trace.push(j);
        if cfg.tolerance > 0.0 && prev - j <= cfg.tolerance * prev {
            break;
        }
    }
    Ok(SgdFit {
        theta,
        theta0,
        epochs_run,
        trace,
    })
}

/// Fold of each record: a seeded shuffle of positions, then position mod k.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambdas: Vec<f64>,
    /// Mean validation MSE per lambda, same order as `lambdas`.
    pub validation_mse: Vec<f64>,
    pub folds: usize,
}

/// Linear loss predictor `theta . x + theta0` over normalized conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub theta: [f64; DIMS],
    pub theta0: f64,
    pub lambda_star: f64,
    /// Normalization box: feature `d` is `(v - low_d) / (high_d - low_d)`.
    pub space: ParameterSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvReport>,
}

impl RidgeModel {
    pub fn predict_unit(&self, u: &[f64; DIMS]) -> f64 {
        dot(&self.theta, u) + self.theta0
    }

    pub fn predict(&self, c: &PrintConditions) -> f64 {
        self.predict_unit(&self.space.normalize(c))
    }
}

fn normalized(data: &[ScoredCondition], space: &ParameterSpace) -> Vec<([f64; DIMS], f64)> {
    data.iter().map(|r| (space.normalize(&r.conditions), r.loss)).collect()
}

/// Picks lambda by k-fold validation MSE (ties to the smaller lambda) and
/// refits on everything with it.
pub fn cross_validate(data: &[ScoredCondition], space: &ParameterSpace, cfg: &SgdConfig) -> Result<RidgeModel, SgdError> {
    if cfg.lambdas.is_empty() {
        return Err(SgdError::Argument("empty lambda grid".into()));
    }
    if cfg.folds < 2 || data.len() < cfg.folds {
        return Err(SgdError::Argument(format!(
            "need k >= 2 and at least k records, got k = {} with {} records",
            cfg.folds,
            data.len()
        )));
    }
    let xy = normalized(data, space);
    let fold = fold_assignment(xy.len(), cfg.folds, cfg.seed);
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();

    let mut validation_mse = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let mut total = 0.0;
        for k in 0..cfg.folds {
            let (mut train, mut val) = (Vec::new(), Vec::new());
            for (i, row) in xy.iter().enumerate() {
                if fold[i] == k {
                    val.push(*row);
                } else {
                    train.push(*row);
                }
            }
            let fit = sgd_fit(&train, lambda, cfg, cfg.seed.wrapping_add(k as u64 + 1))?;
            total += objective(&val, &fit.theta, fit.theta0, 0.0);
        }
        validation_mse.push(total / cfg.folds as f64);
    }
    let mut best = 0;
    for (i, m) in validation_mse.iter().enumerate() {
        if *m < validation_mse[best] {
            best = i;
        }
    }
    let lambda_star = lambdas[best];
    let fit = sgd_fit(&xy, lambda_star, cfg, cfg.seed)?;
    Ok(RidgeModel {
        theta: fit.theta,
        theta0: fit.theta0,
        lambda_star,
        space: space.clone(),
        cv: Some(CvReport {
            lambdas,
            validation_mse,
            folds: cfg.folds,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeSuggestion {
    pub conditions: PrintConditions,
    pub normalized: [f64; DIMS],
    pub predicted_loss: f64,
}

/// Minimizer of the linear prediction over the uniform pool and the eight
/// box corners; ties go to the lexicographically smaller point.
pub fn sgd_suggest(model: &RidgeModel, n_candidates: usize, seed: u64) -> RidgeSuggestion {
    let mut pool = uniform_unit(n_candidates, seed);
    for m in 0..8u32 {
        pool.push([0, 1, 2].map(|d| f64::from((m >> (2 - d)) & 1)));
    }
    let (u, p) = pool
        .into_iter()
        .map(|u| (u, model.predict_unit(&u)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(crate::surrogate::lex_cmp(&a.0, &b.0)))
        .expect("pool holds the corners");
    RidgeSuggestion {
        conditions: model.space.denormalize(u),
        normalized: u,
        predicted_loss: p,
    }
}
