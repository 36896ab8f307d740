//! Run configuration: a TOML file with nested sections, echoed in full
//! into the report for auditability.

use std::path::{Path, PathBuf};

use rdnp::confounder::BasisSpec;
use rdnp::local::Mode;
use rdnp::partition::Hyperparameters;
use rdnp::sampler::ChainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub confounder: ConfounderConfig,
    #[serde(default)]
    pub prior: Hyperparameters,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub flags: FlagsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub cutoff: f64,
    pub mode: Mode,
    /// Column holding subject identifiers; auto-detected `id` column when
    /// absent.
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default = "default_r_column")]
    pub r_column: String,
    #[serde(default = "default_y_column")]
    pub y_column: String,
    #[serde(default = "default_t_column")]
    pub t_column: String,
    /// Multivariate assignment reduction: r = (min(columns) − offset)/scale.
    /// Overrides `r_column` when present.
    #[serde(default)]
    pub assignment: Option<AssignmentReduction>,
}

fn default_r_column() -> String {
    "r".to_string()
}

fn default_y_column() -> String {
    "y".to_string()
}

fn default_t_column() -> String {
    "t".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentReduction {
    pub columns: Vec<String>,
    pub offset: f64,
    pub scale: f64,
}

/// Exactly one confounder source: an existing column, or a multivariate
/// confounder score computed from listed covariate columns.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfounderConfig {
    #[serde(default)]
    pub column: Option<String>,
    #[serde(default)]
    pub score: Option<ScoreConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    pub columns: Vec<String>,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_basis")]
    pub basis: BasisSpec,
}

fn default_v() -> f64 {
    1000.0
}

fn default_basis() -> BasisSpec {
    BasisSpec::Linear
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_report_path")]
    pub path: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
    /// Draws whose cluster has fewer subjects than this on either side are
    /// dropped entirely.
    #[serde(default = "default_min_side")]
    pub min_side: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            path: default_report_path(),
            format: ReportFormat::default(),
            min_side: default_min_side(),
            level: default_level(),
        }
    }
}

fn default_report_path() -> PathBuf {
    PathBuf::from("report.json")
}

fn default_min_side() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FlagsConfig {
    /// Exact permutation KS p-value for clusters with both sides ≤ 10.
    #[serde(default)]
    pub exact_ks: bool,
    /// Write per-draw trace files (one scalar per line) for k and the log
    /// kernel.
    #[serde(default)]
    pub debug_traces: bool,
    #[serde(default)]
    pub trace_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.confounder.column, &self.confounder.score) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "confounder: set exactly one of `column` and `score`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "confounder: set exactly one of `column` and `score`".into(),
                ))
            }
            _ => {}
        }
        if let Some(score) = &self.confounder.score {
            if score.columns.is_empty() {
                return Err(CliError::Config(
                    "confounder.score: `columns` must not be empty".into(),
                ));
            }
        }
        if let Some(asg) = &self.input.assignment {
            if asg.columns.is_empty() {
                return Err(CliError::Config(
                    "input.assignment: `columns` must not be empty".into(),
                ));
            }
            if asg.scale == 0.0 || !asg.scale.is_finite() {
                return Err(CliError::Config(
                    "input.assignment: `scale` must be finite and nonzero".into(),
                ));
            }
        }
        if !self.input.cutoff.is_finite() {
            return Err(CliError::Config("input.cutoff must be finite".into()));
        }
        if !(self.report.level > 0.0 && self.report.level < 1.0) {
            return Err(CliError::Config(
                "report.level must lie strictly between 0 and 1".into(),
            ));
        }
        self.prior
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical TOML echo of the resolved config (defaults filled in).
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
