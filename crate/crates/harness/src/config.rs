use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use model_transfer::analysis::{GridSpec, RateConfig};
use model_transfer::constructions::FamilySpec;
use model_transfer::selection::SelectionConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RateCurve,
    GapDemo,
    Verify,
    ErmCheck,
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Algorithm1,
    Oracle,
    TargetOnly,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Algorithm1 => "algorithm1",
            Learner::Oracle => "oracle",
            Learner::TargetOnly => "target_only",
        }
    }
}

/// Level handed to the oracle learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleRule {
    /// `argmin φ♯`.
    #[default]
    Sharp,
    /// `argmin φ♭`.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Adds a wall-time column; breaks byte-for-byte reproducibility.
    #[serde(default)]
    pub record_timing: bool,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Values tried for both `C` and `c`.
    #[serde(default = "default_calibration_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_calibration_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_bootstrap() -> usize {
    1000
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            grid: default_calibration_grid(),
            bootstrap: default_bootstrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErmCheckConfig {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_max_level")]
    pub max_level: usize,
}

fn default_cases() -> usize {
    200
}

fn default_max_n() -> usize {
    12
}

fn default_max_level() -> usize {
    4
}

impl Default for ErmCheckConfig {
    fn default() -> Self {
        ErmCheckConfig {
            cases: default_cases(),
            max_n: default_max_n(),
            max_level: default_max_level(),
        }
    }
}

fn default_learners() -> Vec<Learner> {
    vec![Learner::Algorithm1, Learner::Oracle, Learner::TargetOnly]
}

fn default_replicates() -> usize {
    100
}

/// One experiment. The family's tag and parameters sit at the top level
/// of the document (`family = "gap"`, `rho_a = 4.0`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(flatten)]
    pub family: FamilySpec,
    pub n_p: Vec<usize>,
    pub n_q: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_learners")]
    pub learners: Vec<Learner>,
    #[serde(default)]
    pub oracle_level: OracleRule,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub rates: RateConfig,
    #[serde(default = "GridSpec::coarse")]
    pub grid: GridSpec,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub erm_check: ErmCheckConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// A config with defaults everywhere except the required fields.
    pub fn new(kind: ExperimentKind, family: FamilySpec, n_p: Vec<usize>, n_q: Vec<usize>) -> Self {
        ExperimentConfig {
            kind,
            family,
            n_p,
            n_q,
            replicates: default_replicates(),
            base_seed: 0,
            learners: default_learners(),
            oracle_level: OracleRule::default(),
            selection: SelectionConfig::default(),
            rates: RateConfig::default(),
            grid: GridSpec::coarse(),
            calibrate: CalibrateConfig::default(),
            erm_check: ErmCheckConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.n_p.is_empty() || self.n_q.is_empty() {
            bail!("n_p and n_q schedules must be nonempty");
        }
        if self.learners.is_empty() {
            bail!("no learners requested");
        }
        self.selection.validate().context("selection config")?;
        Ok(())
    }

    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// All `(n_P, n_Q)` pairs in schedule order.
    pub fn size_pairs(&self) -> Vec<(usize, usize)> {
        self.n_p
            .iter()
            .flat_map(|&p| self.n_q.iter().map(move |&q| (p, q)))
            .collect()
    }
}
