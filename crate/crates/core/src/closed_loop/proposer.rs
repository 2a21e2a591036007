use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{cross_validate, sgd_suggest, tiles, RidgeModel, ScoredCondition, SgdConfig};
use crate::raster::Transform;
use crate::sampling::{ParameterSpace, PrintConditions, DIMS};
use crate::surrogate::{suggest, GpConfig, GpModel, SuggestConfig};
use crate::vision::{score_image, LossWeights, SegmentParams};

use super::{LoopError, Optimizer, Sample};

/// Where the optimizer wants to print next and what it expects to see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub conditions: PrintConditions,
    pub normalized: [f64; DIMS],
    pub predicted_loss: f64,
}

/// Seconds an optimizer spent preparing one new sample for training.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestTimings {
    pub read: f64,
    pub score: f64,
}

/// A trained model kept for later plots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchivedModel {
    Gp(GpModel),
    Ridge(RidgeModel),
}

impl ArchivedModel {
    /// Predicted loss at a unit-cube point.
    pub fn predict_unit(&self, u: &[f64; DIMS]) -> f64 {
        match self {
            ArchivedModel::Gp(m) => m.predict_unit(u).mean,
            ArchivedModel::Ridge(m) => m.predict_unit(u),
        }
    }

    pub fn space(&self) -> &ParameterSpace {
        match self {
            ArchivedModel::Gp(m) => m.space(),
            ArchivedModel::Ridge(m) => &m.space,
        }
    }

    pub fn as_gp(&self) -> Option<&GpModel> {
        match self {
            ArchivedModel::Gp(m) => Some(m),
            ArchivedModel::Ridge(_) => None,
        }
    }
}

/// One optimizer arm of the loop.
pub trait Proposer {
    fn optimizer(&self) -> Optimizer;

    /// Called once for every sample as it joins the training set.
    fn ingest(&mut self, _sample: &Sample) -> Result<IngestTimings, LoopError> {
        Ok(IngestTimings::default())
    }

    /// Fits the model on every sample so far.
    fn train(&mut self, samples: &[Sample]) -> Result<(), LoopError>;

    fn propose(&mut self) -> Result<Proposal, LoopError>;

    /// The model from the last `train`, if the arm has one.
    fn archive(&self) -> Option<ArchivedModel> {
        None
    }
}

/// GP surrogate refit from scratch each update, EI maximized over a
/// candidate pool.
#[derive(Debug, Clone)]
pub struct BoProposer {
    pub space: ParameterSpace,
    pub gp: GpConfig,
    pub suggest: SuggestConfig,
    model: Option<GpModel>,
}

impl BoProposer {
    pub fn new(space: ParameterSpace, gp: GpConfig, suggest: SuggestConfig) -> Self {
        Self {
            space,
            gp,
            suggest,
            model: None,
        }
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }
}

impl Proposer for BoProposer {
    fn optimizer(&self) -> Optimizer {
        Optimizer::Bo
    }

    fn train(&mut self, samples: &[Sample]) -> Result<(), LoopError> {
        let data: Vec<_> = samples.iter().map(|s| (s.conditions, s.score.combined)).collect();
        self.model = Some(GpModel::fit(&data, &self.space, &self.gp)?);
        Ok(())
    }

    fn propose(&mut self) -> Result<Proposal, LoopError> {
        let model = self.model.as_ref().ok_or(LoopError::Argument("propose before train".into()))?;
        let s = suggest(model, model.best_observed(), &self.suggest);
        Ok(Proposal {
            conditions: s.conditions,
            normalized: s.normalized,
            predicted_loss: s.predicted_loss,
        })
    }

    fn archive(&self) -> Option<ArchivedModel> {
        self.model.clone().map(ArchivedModel::Gp)
    }
}

/// Cross-validated ridge regression on augmented sub-images. Each sample
/// is tiled, transformed and re-scored once, when it is ingested.
#[derive(Debug, Clone)]
pub struct SgdProposer {
    pub space: ParameterSpace,
    pub sgd: SgdConfig,
    pub segment: SegmentParams,
    pub weights: LossWeights,
    pub n_candidates: usize,
    pub candidate_seed: u64,
    records: Vec<ScoredCondition>,
    model: Option<RidgeModel>,
}

impl SgdProposer {
    pub fn new(
        space: ParameterSpace,
        sgd: SgdConfig,
        segment: SegmentParams,
        weights: LossWeights,
        n_candidates: usize,
        candidate_seed: u64,
    ) -> Self {
        Self {
            space,
            sgd,
            segment,
            weights,
            n_candidates,
            candidate_seed,
            records: Vec::new(),
            model: None,
        }
    }

    /// Augmented records ingested so far.
    pub fn records(&self) -> &[ScoredCondition] {
        &self.records
    }
}

impl Proposer for SgdProposer {
    fn optimizer(&self) -> Optimizer {
        Optimizer::Sgd
    }

    fn ingest(&mut self, sample: &Sample) -> Result<IngestTimings, LoopError> {
        let t = Instant::now();
        let views: Vec<_> = tiles(&sample.image)?
            .iter()
            .flat_map(|tile| Transform::ALL.map(|tr| tile.transformed(tr)))
            .collect();
        let read = t.elapsed().as_secs_f64();
        let t = Instant::now();
        self.records.extend(views.iter().map(|v| ScoredCondition {
            conditions: sample.conditions,
            loss: score_image(v, &self.segment, &self.weights).combined,
        }));
        Ok(IngestTimings {
            read,
            score: t.elapsed().as_secs_f64(),
        })
    }

    fn train(&mut self, _samples: &[Sample]) -> Result<(), LoopError> {
        self.model = Some(cross_validate(&self.records, &self.space, &self.sgd)?);
        Ok(())
    }

    fn propose(&mut self) -> Result<Proposal, LoopError> {
        let model = self.model.as_ref().ok_or(LoopError::Argument("propose before train".into()))?;
        let s = sgd_suggest(model, self.n_candidates, self.candidate_seed);
        Ok(Proposal {
            conditions: s.conditions,
            normalized: s.normalized,
            predicted_loss: s.predicted_loss,
        })
    }

    fn archive(&self) -> Option<ArchivedModel> {
        self.model.clone().map(ArchivedModel::Ridge)
    }
}

/// Always proposes the same point; for exercising the loop itself.
#[derive(Debug, Clone)]
pub struct FixedProposer {
    pub optimizer: Optimizer,
    pub space: ParameterSpace,
    pub at: [f64; DIMS],
    pub predicted_loss: f64,
}

impl Proposer for FixedProposer {
    fn optimizer(&self) -> Optimizer {
        self.optimizer
    }

    fn train(&mut self, _samples: &[Sample]) -> Result<(), LoopError> {
        Ok(())
    }

    fn propose(&mut self) -> Result<Proposal, LoopError> {
        Ok(Proposal {
            conditions: self.space.denormalize(self.at),
            normalized: self.at,
            predicted_loss: self.predicted_loss,
        })
    }
}
