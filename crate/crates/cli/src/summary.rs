use droploop::closed_loop::{prediction_rmse, Optimizer, Origin, RmseReport, RunOutcome, StepTimings};
use droploop::PrintConditions;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub step: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub optimizer: Optimizer,
    pub converged: bool,
    /// Set when the run stopped on an error.
    pub error: Option<String>,
    pub updates: usize,
    pub converged_at: Option<usize>,
    pub first_suggested_at: Option<usize>,
    pub optimum: Option<PrintConditions>,
    pub predicted_loss: Option<f64>,
    pub final_loss: Option<f64>,
    /// None when no initialization sample was scored.
    pub best_initial_loss: Option<f64>,
    pub initial_samples: usize,
    pub total_samples: usize,
    pub rmse: Option<RmseReport>,
    pub init_seconds: f64,
    /// Mean over updates, not split into rows.
    pub mean_timings: StepTimings,
    /// Mean seconds per update in the six reported rows.
    pub rows: Vec<TimingRow>,
    pub total_per_update: f64,
    /// Summed over every update of the run.
    pub total_for_convergence: f64,
}

impl Summary {
    pub fn new(out: &RunOutcome, error: Option<String>) -> Self {
        let ledger = &out.ledger;
        let last = ledger.final_record();
        let mean = ledger.mean_timings();
        Self {
            optimizer: ledger.optimizer,
            converged: ledger.converged(),
            error,
            updates: ledger.len(),
            converged_at: ledger.converged_at(),
            first_suggested_at: ledger.first_suggested_at(),
            optimum: last.map(|r| r.suggestion),
            predicted_loss: last.map(|r| r.predicted_loss),
            final_loss: last.map(|r| r.actual_loss),
            best_initial_loss: Some(out.best_initial_loss()).filter(|v| v.is_finite()),
            initial_samples: out.samples.iter().filter(|s| s.origin == Origin::Initialization).count(),
            total_samples: out.samples.len(),
            rmse: prediction_rmse(ledger).ok(),
            init_seconds: out.init_seconds,
            mean_timings: mean,
            rows: mean
                .rows()
                .iter()
                .map(|(step, seconds)| TimingRow {
                    step: (*step).to_owned(),
                    seconds: *seconds,
                })
                .collect(),
            total_per_update: mean.total(),
            total_for_convergence: ledger.records.iter().fold(0.0, |acc, r| acc + r.timings.total()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |l: String| {
            s.push_str(&l);
            s.push('\n');
        };
        line(format!("optimizer: {}", self.optimizer.name()));
        line(format!("converged: {}", self.converged));
        if let Some(e) = &self.error {
            line(format!("error: {e}"));
        }
        line(format!("updates: {}", self.updates));
        if let Some(t) = self.converged_at {
            let first = self.first_suggested_at.unwrap_or(t);
            line(format!("converged at update: {t} (optimum first suggested at update {first})"));
        }
        if let Some(c) = self.optimum {
            line(format!(
                "optimum: pressure {} MPa, frequency {} Hz, speed {} mm/s",
                c.pressure, c.frequency, c.speed
            ));
        }
        if let (Some(p), Some(a)) = (self.predicted_loss, self.final_loss) {
            line(format!("final loss: predicted {p:.6}, actual {a:.6}"));
        }
        if let Some(b) = self.best_initial_loss {
            line(format!("best initial loss: {b:.6}"));
        }
        line(format!(
            "samples: {} initial + {} suggested = {}",
            self.initial_samples,
            self.total_samples - self.initial_samples,
            self.total_samples
        ));
        if let Some(r) = self.rmse {
            line(format!("prediction RMSE: {:.6e} overall, {:.6e} final update", r.overall, r.final_update));
        }
        line(String::new());
        line(format!("{:<24}{:>14}", "step", "s / update"));
        for r in &self.rows {
            line(format!("{:<24}{:>14.6}", r.step, r.seconds));
        }
        line(format!("{:<24}{:>14.6}", "Total per Update", self.total_per_update));
        line(format!("{:<24}{:>14.6}", "Total for Convergence", self.total_for_convergence));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use droploop::closed_loop::{RunLedger, UpdateRecord, LEDGER_SCHEMA};

    fn outcome() -> RunOutcome {
        let rec = |i: usize, conv: bool| UpdateRecord {
            schema: LEDGER_SCHEMA,
            update_index: i,
            optimizer: Optimizer::Bo,
            suggestion: PrintConditions::new(0.05, 30.0, 300.0),
            normalized: [0.5; 3],
            predicted_loss: 0.2,
            actual_loss: 0.3,
            geometric_loss: 0.3,
            yield_loss: 0.3,
            training_samples: 11 + i,
            best_loss_before: 0.35,
            converged: conv,
            first_suggested_at: conv.then_some(1),
            timings: StepTimings {
                train: 1.0,
                predict: 0.5,
                print: 2.0,
                ..Default::default()
            },
        };
        RunOutcome {
            ledger: RunLedger {
                optimizer: Optimizer::Bo,
                records: vec![rec(1, false), rec(2, true)],
            },
            samples: Vec::new(),
            models: Vec::new(),
            init_seconds: 0.0,
        }
    }

    #[test]
    fn six_rows_plus_totals() {
        let s = Summary::new(&outcome(), None);
        assert_eq!(s.rows.len(), 6);
        assert_eq!(s.rows[2].seconds, 1.5);
        assert_eq!(s.total_per_update, 3.5);
        assert_eq!(s.total_for_convergence, 7.0);
        let text = s.to_text();
        assert!(text.contains("converged: true"));
        for step in ["Read Images", "Compute Score", "Train Model", "Printer Set Up", "Print Droplets", "Image Droplets"] {
            assert_eq!(text.matches(step).count(), 1, "{step}");
        }
        assert!(text.contains("Total per Update") && text.contains("Total for Convergence"));
        assert!(text.contains("first suggested at update 1"));
        assert_eq!(s.best_initial_loss, None);
        assert!(!text.contains("best initial"));

        let empty = RunOutcome {
            ledger: RunLedger::new(Optimizer::Sgd),
            ..outcome()
        };
        let text = Summary::new(&empty, Some("timed out".into())).to_text();
        assert!(text.contains("error: timed out") && !text.contains("-0.0"));
    }
}
