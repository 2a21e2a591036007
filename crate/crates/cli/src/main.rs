//! `droploop`: plan, run, compare and plot closed-loop printing runs.
//!
//! Exit codes: 0 success, 1 data or loop errors (partial results are left
//! on disk), 2 config errors, 3 missing run state.

mod config;
mod report;
mod rundir;
mod run;
mod score;
mod summary;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use droploop::closed_loop::{ArchivedModel, Optimizer};
use droploop::export::write_atomic;
use droploop::surrogate::GpModel;
use droploop::vision::LossWeights;
use sha2::{Digest, Sha256};

use config::RunConfig;
use report::ReportKind;
use rundir::StoredRun;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::State(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "droploop", version, about = "Closed-loop optimisation of droplet printing conditions")]
struct Cli {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = "DROPLOOP_OUT", default_value = "droploop-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum OptimizerArg {
    Bo,
    Sgd,
}

#[derive(Subcommand)]
enum Command {
    /// Write the initialization plan to `<run dir>/plan.csv`.
    Init,
    /// Score one PNG or every PNG in a directory.
    Score {
        path: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write segmentation overlays into this directory.
        #[arg(long)]
        overlays: Option<PathBuf>,
        #[arg(long, requires = "w_e")]
        w_g: Option<f64>,
        #[arg(long, requires = "w_g")]
        w_e: Option<f64>,
    },
    /// Run the optimisation loop.
    Run {
        /// Overrides the config's optimizer.
        #[arg(long, value_enum)]
        optimizer: Option<OptimizerArg>,
    },
    /// Run both optimizers on the same config and seed.
    Compare,
    /// Export plots and CSVs from a run directory.
    Report {
        run_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// Fit on a condition table with scores instead of a run.
        #[arg(long, conflicts_with = "run_dir")]
        table: Option<PathBuf>,
        /// First update of a single loss-delta pair.
        #[arg(long, requires = "to")]
        from: Option<usize>,
        #[arg(long, requires = "from")]
        to: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.resolve(cli.seed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("droploop: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Init => {
            let path = run::cmd_init(&load_config(cli)?, &cli.out)?;
            println!("{}", path.display());
        }
        Command::Score { path, csv, overlays, w_g, w_e } => {
            let mut cfg = load_config(cli)?;
            if let (Some(g), Some(e)) = (w_g, w_e) {
                cfg.weights = LossWeights::new(*g, *e).map_err(|e| CliError::Config(e.to_string()))?;
            }
            let out = score::score_path(path, &cfg.weights, &cfg.segment, overlays.as_deref())?;
            match csv {
                Some(p) => write_atomic(p, out.csv.as_bytes())?,
                None => print!("{}", out.csv),
            }
            if out.failures > 0 {
                return Err(CliError::Data(format!("{} file(s) could not be scored", out.failures)));
            }
        }
        Command::Run { optimizer } => {
            let mut cfg = load_config(cli)?;
            if let Some(o) = optimizer {
                cfg.optimizer = match o {
                    OptimizerArg::Bo => Optimizer::Bo,
                    OptimizerArg::Sgd => Optimizer::Sgd,
                };
            }
            run::cmd_run(&cfg, &cli.out)?;
        }
        Command::Compare => {
            run::cmd_compare(&load_config(cli)?, &cli.out)?;
        }
        Command::Report { run_dir, kind, table, from, to } => match (run_dir, table) {
            (Some(dir), None) => report_run(dir, *kind, from.zip(*to))?,
            (None, Some(t)) => report_table(cli, t, *kind)?,
            _ => return Err(CliError::Config("report needs a run directory or --table".into())),
        },
    }
    Ok(())
}

fn report_run(dir: &Path, kind: ReportKind, pair: Option<(usize, usize)>) -> Result<(), CliError> {
    let run = StoredRun::open(dir)?;
    let cfg = &run.config.report;
    let n = run.ledger.len();
    match kind {
        ReportKind::Acquisition => {
            let out = dir.join("report").join("acquisition");
            for t in 1..=n {
                report::acquisition(&out, &format!("update-{t:03}"), &run.model(t)?, cfg)?;
            }
            println!("{} cross-sections in {}", 3 * n, out.display());
        }
        ReportKind::LossDelta => {
            let out = dir.join("report").join("loss-delta");
            let pairs: Vec<_> = match pair {
                Some(p) => vec![p],
                None => (2..=n).map(|t| (t - 1, t)).collect(),
            };
            if pairs.is_empty() {
                return Err(CliError::State(format!("{} has a single update; nothing to difference", dir.display())));
            }
            let mut table = String::from("from,to,max\n");
            for (a, b) in pairs {
                let (ma, mb) = (run.model(a)?, run.model(b)?);
                let (_, max) = report::loss_delta(&out, (a, &ma), (b, &mb), cfg)?;
                table.push_str(&format!("{a},{b},{max}\n"));
            }
            write_atomic(&out.join("deltas.csv"), table.as_bytes())?;
            println!("loss deltas in {}", out.display());
        }
        ReportKind::Manifold1d => {
            let out = dir.join("report").join("manifold1d");
            report::manifold(&out, &run.config.space, &run.samples, cfg)?;
            println!("1-D manifold in {}", out.display());
        }
    }
    Ok(())
}

/// Report on a scored condition table: the GP fitted to it (acquisition)
/// or its 1-D manifold. Output goes to `<out>/table-<seed>-<digest>`.
fn report_table(cli: &Cli, path: &Path, kind: ReportKind) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let rows = table::parse(&String::from_utf8_lossy(&bytes)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let data = rows
        .iter()
        .map(|r| r.score.map(|s| (r.conditions(), s)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Data(format!("{}: every row needs a score", path.display())))?;
    let digest = hex::encode(Sha256::digest([cfg.digest().as_bytes(), &bytes].concat()));
    let dir = cli.out.join(format!("table-{}-{}", cfg.seed, &digest[..12])).join("report");
    match kind {
        ReportKind::Acquisition => {
            let gp = GpModel::fit(&data, &cfg.space, &cfg.gp).map_err(|e| CliError::Data(e.to_string()))?;
            let out = dir.join("acquisition");
            let s = droploop::surrogate::suggest(&gp, gp.best_observed(), &cfg.suggest);
            report::acquisition(&out, "table", &ArchivedModel::Gp(gp), &cfg.report)?;
            let c = s.conditions;
            let text = format!(
                "pressure_mpa,frequency_hz,speed_mm_s,predicted_loss,expected_improvement\n{},{},{},{},{}\n",
                c.pressure, c.frequency, c.speed, s.predicted_loss, s.expected_improvement
            );
            write_atomic(&out.join("suggestion.csv"), text.as_bytes())?;
            println!("acquisition cross-sections in {}", out.display());
        }
        ReportKind::Manifold1d => {
            let out = dir.join("manifold1d");
            report::manifold(&out, &cfg.space, &data, &cfg.report)?;
            println!("1-D manifold in {}", out.display());
        }
        ReportKind::LossDelta => {
            return Err(CliError::Config("loss-delta needs a run directory with archived models".into()));
        }
    }
    Ok(())
}
