use std::fmt;
use std::time::Instant;

use crate::printer::Printer;
use crate::sampling::{lhs_sample, ParameterSpace, PrintConditions, DIMS};
use crate::vision::{score_image, LossWeights, SegmentParams};

use super::ledger::{RunLedger, StepTimings, UpdateRecord, LEDGER_SCHEMA};
use super::proposer::{ArchivedModel, Proposer};
use super::{ConvergencePolicy, LoopError, Origin, Sample};

/// How the training set is seeded before the first update.
#[derive(Debug, Clone)]
pub enum Init {
    /// Print an `n`-point Latin hypercube design.
    Lhs { n: usize, seed: u64 },
    /// Print these conditions.
    Plan(Vec<PrintConditions>),
    /// Use samples that were already printed and scored.
    Samples(Vec<Sample>),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub space: ParameterSpace,
    pub weights: LossWeights,
    pub segment: SegmentParams,
    pub policy: ConvergencePolicy,
    pub init: Init,
}

/// Hooks for persisting a run while it progresses.
pub trait RunObserver {
    fn initialized(&mut self, _samples: &[Sample]) -> Result<(), LoopError> {
        Ok(())
    }

    fn updated(
        &mut self,
        _record: &UpdateRecord,
        _sample: &Sample,
        _model: Option<&ArchivedModel>,
    ) -> Result<(), LoopError> {
        Ok(())
    }
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ledger: RunLedger,
    /// Initialization samples first, then one per update.
    pub samples: Vec<Sample>,
    /// `models[t - 1]` was trained for update `t`.
    pub models: Vec<Option<ArchivedModel>>,
    /// Wall-clock seconds spent printing and scoring the initialization.
    pub init_seconds: f64,
}

impl RunOutcome {
    pub fn model(&self, update: usize) -> Result<&ArchivedModel, LoopError> {
        update
            .checked_sub(1)
            .and_then(|i| self.models.get(i))
            .and_then(Option::as_ref)
            .ok_or(LoopError::MissingModel(update))
    }

    /// Lowest loss among the initialization samples.
    pub fn best_initial_loss(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.origin == Origin::Initialization)
            .map(|s| s.score.combined)
            .fold(f64::INFINITY, f64::min)
    }
}

/// A run that stopped on an error, with everything recorded up to then.
#[derive(Debug)]
pub struct RunFailure {
    pub error: LoopError,
    pub partial: RunOutcome,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted after {} updates: {}", self.partial.ledger.len(), self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs the loop until the suggestions settle or `policy.max_updates` is
/// reached. Every printed condition is first clamped into `spec.space`.
pub fn run(
    proposer: &mut dyn Proposer,
    printer: &mut dyn Printer,
    spec: &RunSpec,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome, Box<RunFailure>> {
    let mut out = RunOutcome {
        ledger: RunLedger::new(proposer.optimizer()),
        samples: Vec::new(),
        models: Vec::new(),
        init_seconds: 0.0,
    };
    match drive(proposer, printer, spec, observer, &mut out) {
        Ok(()) => Ok(out),
        Err(error) => Err(Box::new(RunFailure { error, partial: out })),
    }
}

fn drive(
    proposer: &mut dyn Proposer,
    printer: &mut dyn Printer,
    spec: &RunSpec,
    observer: &mut dyn RunObserver,
    out: &mut RunOutcome,
) -> Result<(), LoopError> {
    spec.policy.validate()?;
    let start = Instant::now();
    initialize(proposer, printer, spec, out)?;
    out.init_seconds = start.elapsed().as_secs_f64();
    observer.initialized(&out.samples)?;

    let mut suggested: Vec<[f64; DIMS]> = Vec::new();
    for update in 1..=spec.policy.max_updates {
        let mut timings = StepTimings::default();
        let t = Instant::now();
        proposer.train(&out.samples)?;
        timings.train = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let proposal = proposer.propose()?;
        timings.predict = t.elapsed().as_secs_f64();
        let model = proposer.archive();

        let cond = spec.space.clamp(&proposal.conditions);
        let normalized = proposal.normalized.map(|v| v.clamp(0.0, 1.0));
        let synth = printer.synthesize(&cond)?;
        timings.setup = synth.timings.setup;
        timings.print = synth.timings.print;
        timings.image = synth.timings.image;

        let t = Instant::now();
        let image = synth.raster;
        timings.read = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let score = score_image(&image, &spec.segment, &spec.weights);
        timings.score = t.elapsed().as_secs_f64();
        let sample = Sample {
            conditions: cond,
            image,
            score,
            origin: Origin::Suggested,
            update_index: update,
        };
        let ingest = proposer.ingest(&sample)?;
        timings.read += ingest.read;
        timings.score += ingest.score;

        suggested.push(normalized);
        let converged = spec.policy.is_converged(&suggested);
        let record = UpdateRecord {
            schema: LEDGER_SCHEMA,
            update_index: update,
            optimizer: proposer.optimizer(),
            suggestion: cond,
            normalized,
            predicted_loss: proposal.predicted_loss,
            actual_loss: score.combined,
            geometric_loss: score.geometric,
            yield_loss: score.yield_,
            training_samples: out.samples.len(),
            best_loss_before: out.samples.iter().map(|s| s.score.combined).fold(f64::INFINITY, f64::min),
            converged,
            first_suggested_at: converged.then(|| first_of_run(&suggested, spec.policy.tol)),
            timings,
        };
        observer.updated(&record, &sample, model.as_ref())?;
        out.ledger.records.push(record);
        out.samples.push(sample);
        out.models.push(model);
        if converged {
            break;
        }
    }
    Ok(())
}

fn initialize(
    proposer: &mut dyn Proposer,
    printer: &mut dyn Printer,
    spec: &RunSpec,
    out: &mut RunOutcome,
) -> Result<(), LoopError> {
    let plan = match &spec.init {
        Init::Lhs { n, seed } => lhs_sample(&spec.space, *n, *seed)?,
        Init::Plan(p) => p.clone(),
        Init::Samples(s) => {
            out.samples = s.clone();
            Vec::new()
        }
    };
    for cond in plan {
        if !spec.space.contains(&cond) {
            return Err(LoopError::Argument(format!("initial condition {cond:?} lies outside the parameter box")));
        }
        let image = printer.synthesize(&cond)?.raster;
        let score = score_image(&image, &spec.segment, &spec.weights);
        out.samples.push(Sample {
            conditions: cond,
            image,
            score,
            origin: Origin::Initialization,
            update_index: 0,
        });
    }
    if out.samples.len() < 2 {
        return Err(LoopError::Argument(format!(
            "need at least 2 initialization samples, got {}",
            out.samples.len()
        )));
    }
    for s in &out.samples {
        proposer.ingest(s)?;
    }
    Ok(())
}

/// 1-based update where the trailing run of suggestions near the last one
/// began.
fn first_of_run(suggested: &[[f64; DIMS]], tol: f64) -> usize {
    let last = suggested[suggested.len() - 1];
    let near = |u: &[f64; DIMS]| u.iter().zip(&last).all(|(a, b)| (a - b).abs() <= tol);
    let mut i = suggested.len() - 1;
    while i > 0 && near(&suggested[i - 1]) {
        i -= 1;
    }
    i + 1
}
