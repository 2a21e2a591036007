use std::path::{Path, PathBuf};
use std::time::Duration;

use droploop::closed_loop::{
    run, BoProposer, Init, LoopError, Optimizer, Proposer, RunSpec, SgdProposer,
};
use droploop::export::write_atomic;
use droploop::printer::{Printer, ReplayPrinter, SimPrinter};
use droploop::{lhs_sample, PrintConditions};
use serde::Serialize;

use crate::config::{dir_name, Backend, RunConfig};
use crate::rundir::RunWriter;
use crate::summary::Summary;
use crate::{table, CliError};

fn printer(cfg: &RunConfig) -> Result<Box<dyn Printer>, CliError> {
    match &cfg.backend {
        Backend::Sim(sim) => Ok(Box::new(
            SimPrinter::new(sim.clone())
                .map_err(|e| CliError::Config(e.to_string()))?
                .with_bounds(cfg.space.clone()),
        )),
        Backend::Replay { inbox, timeout_s, prefix } => Ok(Box::new(
            ReplayPrinter::new(inbox, Duration::from_secs_f64(*timeout_s), prefix)
                .map_err(|e| CliError::Config(e.to_string()))?,
        )),
    }
}

fn proposer(cfg: &RunConfig, optimizer: Optimizer) -> Box<dyn Proposer> {
    match optimizer {
        Optimizer::Bo => Box::new(BoProposer::new(cfg.space.clone(), cfg.gp.clone(), cfg.suggest.clone())),
        Optimizer::Sgd => Box::new(SgdProposer::new(
            cfg.space.clone(),
            cfg.sgd.clone(),
            cfg.segment.clone(),
            cfg.weights,
            cfg.sgd_candidates,
            cfg.seed,
        )),
    }
}

/// The configured plan file, or an LHS design.
pub fn init_plan(cfg: &RunConfig) -> Result<Vec<PrintConditions>, CliError> {
    match &cfg.init.plan {
        Some(path) => {
            let rows = table::read(path).map_err(CliError::Config)?;
            let plan: Vec<_> = rows.iter().map(|r| r.conditions()).collect();
            if let Some(c) = plan.iter().find(|c| !cfg.space.contains(c)) {
                return Err(CliError::Config(format!("plan condition {c:?} lies outside the parameter space")));
            }
            Ok(plan)
        }
        None => lhs_sample(&cfg.space, cfg.init.n, cfg.seed).map_err(|e| CliError::Config(e.to_string())),
    }
}

pub fn cmd_init(cfg: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    let plan = init_plan(cfg)?;
    let dir = out.join(dir_name("run", cfg));
    let path = dir.join("plan.csv");
    write_atomic(&path, table::render(&plan, None).as_bytes())?;
    Ok(path)
}

pub struct Finished {
    pub dir: PathBuf,
    pub summary: Summary,
    /// The loop error, if the run aborted.
    pub error: Option<LoopError>,
}

/// Runs one arm into `dir` and writes its summary, whether or not the
/// loop completed.
pub fn execute(cfg: &RunConfig, optimizer: Optimizer, dir: &Path) -> Result<Finished, CliError> {
    let mut cfg = cfg.clone();
    cfg.optimizer = optimizer;
    let plan = init_plan(&cfg)?;
    if plan.len() < 2 {
        return Err(CliError::Config(format!("a run needs at least 2 initialization samples, got {}", plan.len())));
    }
    let spec = RunSpec {
        space: cfg.space.clone(),
        weights: cfg.weights,
        segment: cfg.segment.clone(),
        policy: cfg.policy,
        init: Init::Plan(plan),
    };
    let mut printer = printer(&cfg)?;
    let mut proposer = proposer(&cfg, optimizer);
    let mut writer = RunWriter::create(dir, &cfg)?;
    let (outcome, error) = match run(proposer.as_mut(), printer.as_mut(), &spec, &mut writer) {
        Ok(o) => (o, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let summary = Summary::new(&outcome, error.as_ref().map(|e| e.to_string()));
    write_atomic(&dir.join("summary.txt"), summary.to_text().as_bytes())?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_atomic(&dir.join("summary.json"), json.as_bytes())?;
    Ok(Finished {
        dir: dir.to_owned(),
        summary,
        error,
    })
}

fn loop_failure(f: &Finished) -> Result<(), CliError> {
    match &f.error {
        None => Ok(()),
        Some(e) => Err(CliError::Data(format!(
            "{} run aborted after {} updates: {e}; partial results in {}",
            f.summary.optimizer.name(),
            f.summary.updates,
            f.dir.display()
        ))),
    }
}

pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Finished, CliError> {
    let dir = out.join(dir_name("run", cfg));
    let done = execute(cfg, cfg.optimizer, &dir)?;
    print!("{}", done.summary.to_text());
    println!("run directory: {}", dir.display());
    loop_failure(&done)?;
    Ok(done)
}

#[derive(Debug, Serialize)]
pub struct ArmReport {
    pub optimizer: Optimizer,
    pub converged: bool,
    pub updates: usize,
    pub first_suggested_at: Option<usize>,
    pub total_samples: usize,
    /// Mean model-fit seconds per update, suggestion search excluded.
    pub train_seconds_per_update: f64,
    /// Mean seconds in the "Train Model" row (fit plus suggestion search).
    pub train_row_seconds_per_update: f64,
    pub rmse_overall: Option<f64>,
    pub rmse_final_update: Option<f64>,
    pub final_loss: Option<f64>,
    pub optimum: Option<PrintConditions>,
    pub total_per_update: f64,
    pub total_for_convergence: f64,
}

impl ArmReport {
    fn new(s: &Summary) -> Self {
        Self {
            optimizer: s.optimizer,
            converged: s.converged,
            updates: s.updates,
            first_suggested_at: s.first_suggested_at,
            total_samples: s.total_samples,
            train_seconds_per_update: s.mean_timings.train,
            train_row_seconds_per_update: s.mean_timings.train + s.mean_timings.predict,
            rmse_overall: s.rmse.map(|r| r.overall),
            rmse_final_update: s.rmse.map(|r| r.final_update),
            final_loss: s.final_loss,
            optimum: s.optimum,
            total_per_update: s.total_per_update,
            total_for_convergence: s.total_for_convergence,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub arms: Vec<ArmReport>,
    /// SGD train seconds over BO train seconds, per update.
    pub sgd_over_bo_train: f64,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.6}"));
        let mut rows: Vec<(&str, Vec<String>)> = vec![
            ("optimizer", self.arms.iter().map(|a| a.optimizer.name().to_owned()).collect()),
            ("converged", self.arms.iter().map(|a| a.converged.to_string()).collect()),
            ("updates", self.arms.iter().map(|a| a.updates.to_string()).collect()),
            ("total samples", self.arms.iter().map(|a| a.total_samples.to_string()).collect()),
        ];
        rows.push(("train s / update", self.arms.iter().map(|a| format!("{:.6}", a.train_seconds_per_update)).collect()));
        rows.push(("train+predict s / update", self.arms.iter().map(|a| format!("{:.6}", a.train_row_seconds_per_update)).collect()));
        rows.push(("RMSE overall", self.arms.iter().map(|a| cell(a.rmse_overall)).collect()));
        rows.push(("RMSE final update", self.arms.iter().map(|a| cell(a.rmse_final_update)).collect()));
        rows.push(("final loss", self.arms.iter().map(|a| cell(a.final_loss)).collect()));
        rows.push(("total s / update", self.arms.iter().map(|a| format!("{:.6}", a.total_per_update)).collect()));
        rows.push(("total s for convergence", self.arms.iter().map(|a| format!("{:.6}", a.total_for_convergence)).collect()));
        let mut s = String::new();
        for (name, vals) in rows {
            s.push_str(&format!("{name:<26}"));
            for v in vals {
                s.push_str(&format!("{v:>14}"));
            }
            s.push('\n');
        }
        s.push_str(&format!("SGD / BO train time: {:.1}x\n", self.sgd_over_bo_train));
        s
    }
}

/// Both arms on the same config and seed, BO first.
pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<Comparison, CliError> {
    let dir = out.join(dir_name("compare", cfg));
    let bo = execute(cfg, Optimizer::Bo, &dir.join("bo"))?;
    let sgd = execute(cfg, Optimizer::Sgd, &dir.join("sgd"))?;
    let arms = vec![ArmReport::new(&bo.summary), ArmReport::new(&sgd.summary)];
    let comparison = Comparison {
        sgd_over_bo_train: arms[1].train_seconds_per_update / arms[0].train_seconds_per_update,
        arms,
    };
    write_atomic(&dir.join("comparison.txt"), comparison.to_text().as_bytes())?;
    let json = serde_json::to_string_pretty(&comparison).expect("comparison serializes") + "\n";
    write_atomic(&dir.join("comparison.json"), json.as_bytes())?;
    print!("{}", comparison.to_text());
    println!("compare directory: {}", dir.display());
    loop_failure(&bo)?;
    loop_failure(&sgd)?;
    Ok(comparison)
}
