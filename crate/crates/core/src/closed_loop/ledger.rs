use serde::{Deserialize, Serialize};

use crate::sampling::{PrintConditions, DIMS};

use super::{LoopError, Optimizer};

/// Version tag carried by every ledger line.
pub const LEDGER_SCHEMA: u32 = 1;

/// Wall-clock seconds spent in each step of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub read: f64,
    pub score: f64,
    pub train: f64,
    /// Suggestion search; reported together with `train`.
    pub predict: f64,
    pub setup: f64,
    pub print: f64,
    pub image: f64,
}

impl StepTimings {
    /// The six reported rows: read, score, train (with predict), setup,
    /// print, image.
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("Read Images", self.read),
            ("Compute Score", self.score),
            ("Train Model", self.train + self.predict),
            ("Printer Set Up", self.setup),
            ("Print Droplets", self.print),
            ("Image Droplets", self.image),
        ]
    }

    pub fn total(&self) -> f64 {
        self.rows().iter().map(|r| r.1).sum()
    }

    fn all(&self) -> [f64; 7] {
        [self.read, self.score, self.train, self.predict, self.setup, self.print, self.image]
    }

    fn from_all(v: [f64; 7]) -> Self {
        Self {
            read: v[0],
            score: v[1],
            train: v[2],
            predict: v[3],
            setup: v[4],
            print: v[5],
            image: v[6],
        }
    }
}

/// One update. Timings are kept out of the serialized record so that runs
/// with equal inputs produce byte-identical ledgers; they travel in a
/// separate [`TimingRecord`] stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub schema: u32,
    /// Counts from 1.
    pub update_index: usize,
    pub optimizer: Optimizer,
    pub suggestion: PrintConditions,
    pub normalized: [f64; DIMS],
    pub predicted_loss: f64,
    pub actual_loss: f64,
    pub geometric_loss: f64,
    pub yield_loss: f64,
    /// Samples the model was trained on.
    pub training_samples: usize,
    /// Lowest loss among those samples.
    pub best_loss_before: f64,
    pub converged: bool,
    /// On the converged record: the update where the converged condition
    /// was first suggested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_suggested_at: Option<usize>,
    #[serde(skip)]
    pub timings: StepTimings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub update_index: usize,
    #[serde(flatten)]
    pub timings: StepTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    pub optimizer: Optimizer,
    pub records: Vec<UpdateRecord>,
}

impl RunLedger {
    pub fn new(optimizer: Optimizer) -> Self {
        Self {
            optimizer,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn converged(&self) -> bool {
        self.records.last().is_some_and(|r| r.converged)
    }

    /// Update index at which convergence was declared.
    pub fn converged_at(&self) -> Option<usize> {
        self.records.last().filter(|r| r.converged).map(|r| r.update_index)
    }

    pub fn first_suggested_at(&self) -> Option<usize> {
        self.records.last().and_then(|r| r.first_suggested_at)
    }

    pub fn final_record(&self) -> Option<&UpdateRecord> {
        self.records.last()
    }

    /// Per-step means over all updates; zero for an empty ledger.
    pub fn mean_timings(&self) -> StepTimings {
        if self.records.is_empty() {
            return StepTimings::default();
        }
        let mut acc = [0.0; 7];
        for r in &self.records {
            for (a, v) in acc.iter_mut().zip(r.timings.all()) {
                *a += v;
            }
        }
        StepTimings::from_all(acc.map(|a| a / self.records.len() as f64))
    }

    /// One JSON object per line, LF terminated.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn timings_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| {
                let t = TimingRecord {
                    update_index: r.update_index,
                    timings: r.timings,
                };
                serde_json::to_string(&t).expect("timing serializes") + "\n"
            })
            .collect()
    }

    /// Parses a ledger stream and, optionally, its timing stream.
    pub fn from_jsonl(ledger: &str, timings: Option<&str>) -> Result<Self, LoopError> {
        let mut records = Vec::new();
        for (n, line) in ledger.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: UpdateRecord =
                serde_json::from_str(line).map_err(|e| LoopError::Ledger(format!("line {}: {e}", n + 1)))?;
            if r.schema != LEDGER_SCHEMA {
                return Err(LoopError::Ledger(format!("line {}: unsupported schema {}", n + 1, r.schema)));
            }
            records.push(r);
        }
        let Some(first) = records.first() else {
            return Err(LoopError::Ledger("no update records".into()));
        };
        let optimizer = first.optimizer;
        let ordered = records.windows(2).all(|w| w[0].update_index < w[1].update_index);
        if !ordered || records.iter().any(|r| r.optimizer != optimizer) {
            return Err(LoopError::Ledger("records must share one optimizer and increase in update_index".into()));
        }
        if let Some(t) = timings {
            for (n, line) in t.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let tr: TimingRecord = serde_json::from_str(line)
                    .map_err(|e| LoopError::Ledger(format!("timings line {}: {e}", n + 1)))?;
                if let Some(r) = records.iter_mut().find(|r| r.update_index == tr.update_index) {
                    r.timings = tr.timings;
                }
            }
        }
        Ok(Self { optimizer, records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    /// Over every update.
    pub overall: f64,
    /// Of the last update alone, i.e. `|L_pred - L|` there.
    pub final_update: f64,
    pub updates: usize,
}

/// Root-mean-square gap between predicted and observed loss.
pub fn prediction_rmse(ledger: &RunLedger) -> Result<RmseReport, LoopError> {
    let last = ledger
        .records
        .last()
        .ok_or_else(|| LoopError::Argument("prediction RMSE needs at least one update".into()))?;
    let sq: f64 = ledger
        .records
        .iter()
        .map(|r| (r.predicted_loss - r.actual_loss).powi(2))
        .sum();
    Ok(RmseReport {
        overall: (sq / ledger.len() as f64).sqrt(),
        final_update: (last.predicted_loss - last.actual_loss).abs(),
        updates: ledger.len(),
    })
}
