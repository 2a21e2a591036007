//! On-disk layout of a run:
//!
//! ```text
//! config.json          resolved config
//! init.csv             initialization conditions and scores
//! samples.csv          every sample with its loss components
//! ledger.jsonl         one update record per line
//! timings.jsonl        step timings per update
//! models/update-NNN.json
//! images/init-NN.png, images/update-NNN.png
//! summary.txt, summary.json
//! ```

use std::io;
use std::path::{Path, PathBuf};

use droploop::closed_loop::{ArchivedModel, LoopError, Origin, RunLedger, RunObserver, Sample, UpdateRecord};
use droploop::export::write_atomic;
use droploop::PrintConditions;

use crate::config::RunConfig;
use crate::{table, CliError};

pub const SAMPLES_HEADER: &str =
    "sample,origin,update_index,pressure_mpa,frequency_hz,speed_mm_s,geometric,yield,combined";

const OUTPUTS: [&str; 9] = [
    "init.csv",
    "samples.csv",
    "ledger.jsonl",
    "timings.jsonl",
    "summary.txt",
    "summary.json",
    "models",
    "images",
    "report",
];

/// Persists a run as it progresses, so an aborted run leaves everything
/// up to its last completed update on disk.
pub struct RunWriter {
    pub dir: PathBuf,
    ledger: RunLedger,
    samples: String,
    n_samples: usize,
}

fn io_err(e: impl std::fmt::Display) -> LoopError {
    LoopError::Io(io::Error::other(e.to_string()))
}

impl RunWriter {
    /// Clears outputs of any earlier run in `dir` and writes the config.
    pub fn create(dir: &Path, cfg: &RunConfig) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        for name in OUTPUTS {
            let p = dir.join(name);
            if p.is_dir() {
                std::fs::remove_dir_all(&p)?;
            } else if p.exists() {
                std::fs::remove_file(&p)?;
            }
        }
        write_atomic(&dir.join("config.json"), cfg.to_pretty_json().as_bytes())?;
        let w = Self {
            dir: dir.to_owned(),
            ledger: RunLedger::new(cfg.optimizer),
            samples: format!("{SAMPLES_HEADER}\n"),
            n_samples: 0,
        };
        // present from the start, so a run that dies during initialization
        // still leaves an (empty) ledger
        write_atomic(&dir.join("ledger.jsonl"), b"")?;
        write_atomic(&dir.join("timings.jsonl"), b"")?;
        write_atomic(&dir.join("samples.csv"), w.samples.as_bytes())?;
        Ok(w)
    }

    fn push_sample(&mut self, s: &Sample) -> Result<(), LoopError> {
        self.n_samples += 1;
        let origin = match s.origin {
            Origin::Initialization => "initialization",
            Origin::Suggested => "suggested",
        };
        let c = s.conditions;
        self.samples.push_str(&format!(
            "{},{origin},{},{},{},{},{},{},{}\n",
            self.n_samples, s.update_index, c.pressure, c.frequency, c.speed, s.score.geometric, s.score.yield_, s.score.combined
        ));
        let name = match s.origin {
            Origin::Initialization => format!("init-{:02}.png", self.n_samples),
            Origin::Suggested => format!("update-{:03}.png", s.update_index),
        };
        let png = s.image.to_png_bytes().map_err(io_err)?;
        write_atomic(&self.dir.join("images").join(name), &png)?;
        write_atomic(&self.dir.join("samples.csv"), self.samples.as_bytes())?;
        Ok(())
    }
}

impl RunObserver for RunWriter {
    fn initialized(&mut self, samples: &[Sample]) -> Result<(), LoopError> {
        let conds: Vec<_> = samples.iter().map(|s| s.conditions).collect();
        let scores: Vec<_> = samples.iter().map(|s| s.score.combined).collect();
        write_atomic(&self.dir.join("init.csv"), table::render(&conds, Some(&scores)).as_bytes())?;
        samples.iter().try_for_each(|s| self.push_sample(s))
    }

    fn updated(&mut self, record: &UpdateRecord, sample: &Sample, model: Option<&ArchivedModel>) -> Result<(), LoopError> {
        if let Some(m) = model {
            let json = serde_json::to_string(m).map_err(io_err)?;
            let name = format!("update-{:03}.json", record.update_index);
            write_atomic(&self.dir.join("models").join(name), json.as_bytes())?;
        }
        self.push_sample(sample)?;
        self.ledger.records.push(record.clone());
        write_atomic(&self.dir.join("timings.jsonl"), self.ledger.timings_jsonl().as_bytes())?;
        write_atomic(&self.dir.join("ledger.jsonl"), self.ledger.to_jsonl().as_bytes())?;
        Ok(())
    }
}

/// A finished or aborted run read back from disk.
pub struct StoredRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub ledger: RunLedger,
    /// Conditions and combined loss of every sample.
    pub samples: Vec<(PrintConditions, f64)>,
}

fn read_state(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::State(format!("{}: {e}", path.display())))
}

impl StoredRun {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(&read_state(&dir.join("config.json"))?)
            .map_err(|e| CliError::State(format!("{}: {e}", dir.join("config.json").display())))?;
        let ledger_text = read_state(&dir.join("ledger.jsonl"))?;
        let timings = std::fs::read_to_string(dir.join("timings.jsonl")).ok();
        let ledger = RunLedger::from_jsonl(&ledger_text, timings.as_deref())
            .map_err(|e| CliError::State(format!("{}: {e}", dir.join("ledger.jsonl").display())))?;
        let samples = parse_samples(&read_state(&dir.join("samples.csv"))?)
            .map_err(|e| CliError::State(format!("{}: {e}", dir.join("samples.csv").display())))?;
        Ok(Self {
            dir: dir.to_owned(),
            config,
            ledger,
            samples,
        })
    }

    pub fn model(&self, update: usize) -> Result<ArchivedModel, CliError> {
        let path = self.dir.join("models").join(format!("update-{update:03}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|_| CliError::State(format!("no archived model for update {update} ({})", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::State(format!("{}: {e}", path.display())))
    }
}

fn parse_samples(text: &str) -> Result<Vec<(PrintConditions, f64)>, String> {
    #[derive(serde::Deserialize)]
    struct Row {
        pressure_mpa: f64,
        frequency_hz: f64,
        speed_mm_s: f64,
        combined: f64,
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize::<Row>()
        .map(|r| {
            r.map(|r| (PrintConditions::new(r.pressure_mpa, r.frequency_hz, r.speed_mm_s), r.combined))
                .map_err(|e| e.to_string())
        })
        .collect()
}
