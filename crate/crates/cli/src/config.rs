use std::path::{Path, PathBuf};

use droploop::closed_loop::{ConvergencePolicy, Optimizer};
use droploop::printer::SimPrinterConfig;
use droploop::surrogate::{GpConfig, SuggestConfig};
use droploop::baseline::SgdConfig;
use droploop::vision::{LossWeights, SegmentParams};
use droploop::ParameterSpace;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_SCHEMA: u32 = 1;

/// Everything a run needs, as one JSON document. Omitted sections take
/// their defaults, so `{"schema_version": 1}` is a complete config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub space: ParameterSpace,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub segment: SegmentParams,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub policy: ConvergencePolicy,
    #[serde(default)]
    pub init: InitConfig,
    /// `seed` here is replaced by the top-level seed.
    #[serde(default)]
    pub gp: GpConfig,
    /// `seed` here is replaced by the top-level seed.
    #[serde(default)]
    pub suggest: SuggestConfig,
    /// `seed` here is replaced by the top-level seed.
    #[serde(default)]
    pub sgd: SgdConfig,
    /// Candidates the SGD arm ranks per suggestion.
    #[serde(default = "default_sgd_candidates")]
    pub sgd_candidates: usize,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_optimizer() -> Optimizer {
    Optimizer::Bo
}

fn default_sgd_candidates() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Sim(SimPrinterConfig),
    /// File-drop exchange with an external printer.
    Replay {
        inbox: PathBuf,
        timeout_s: f64,
        #[serde(default = "default_prefix")]
        prefix: String,
    },
}

fn default_prefix() -> String {
    "req".into()
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Sim(SimPrinterConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// LHS sample count, used when no plan is given.
    pub n: usize,
    /// CSV of conditions to print instead of drawing an LHS design.
    pub plan: Option<PathBuf>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { n: 12, plan: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Grid points per dimension of the acquisition and delta fields.
    pub grid: usize,
    /// Points per 1-D manifold curve.
    pub manifold_points: usize,
    /// Manifold kernel width, unit-cube coordinates.
    pub bandwidth: f64,
    /// Heatmap pixels per grid cell.
    pub scale: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            grid: 25,
            manifold_points: 101,
            bandwidth: droploop::closed_loop::MANIFOLD_BANDWIDTH,
            scale: 8,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str(r#"{"schema_version": 1}"#).expect("minimal config parses")
    }
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(plan) = &mut cfg.init.plan {
            *plan = base.join(&*plan);
        }
        if let Backend::Replay { inbox, .. } = &mut cfg.backend {
            *inbox = base.join(&*inbox);
        }
        Ok(cfg)
    }

    /// Applies a seed override and pushes the seed into every seeded
    /// section.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.gp.seed = self.seed;
        self.suggest.seed = self.seed;
        self.sgd.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != CONFIG_SCHEMA {
            return bad(format!("unsupported schema_version {} (expected {CONFIG_SCHEMA})", self.schema_version));
        }
        self.policy.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.gp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Backend::Sim(sim) = &self.backend {
            sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Backend::Replay { timeout_s, .. } = &self.backend {
            if !(timeout_s.is_finite() && *timeout_s >= 0.0) {
                return bad(format!("replay timeout_s must be a nonnegative number, got {timeout_s}"));
            }
        }
        if self.init.plan.is_none() && self.init.n == 0 {
            return bad("init.n must be at least 1".into());
        }
        if self.suggest.n_candidates == 0 || self.sgd_candidates == 0 {
            return bad("candidate counts must be positive".into());
        }
        if self.sgd.folds < 2 || self.sgd.lambdas.is_empty() || self.sgd.epochs == 0 {
            return bad("sgd needs folds >= 2, at least one lambda and one epoch".into());
        }
        if self.report.grid < 2 || self.report.manifold_points < 2 || !(self.report.bandwidth > 0.0) {
            return bad("report needs grid >= 2, manifold_points >= 2 and a positive bandwidth".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON, for naming run directories.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// `<kind>-<seed>-<first 12 hex digits of the config digest>`
pub fn dir_name(kind: &str, cfg: &RunConfig) -> String {
    format!("{kind}-{}-{}", cfg.seed, &cfg.digest()[..12])
}
