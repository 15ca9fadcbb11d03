use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub views: Vec<ViewConfig>,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    pub loss: String,
    #[serde(default, skip_serializing_if = "LossParams::is_empty")]
    pub params: LossParams,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

impl LossParams {
    fn is_empty(&self) -> bool {
        self.q.is_none() && self.dispersion.is_none() && self.classes.is_none()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// `per_loss` or `gower`; single views default to `per_loss`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    /// `sne` or `knn`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

/// A number or the string `"auto-max"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Strength {
    Value(f64),
    Named(AutoMax),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutoMax {
    #[serde(rename = "auto-max")]
    AutoMax,
}

impl Default for Strength {
    fn default() -> Self {
        Strength::Value(0.0)
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strength::Value(v) => write!(f, "{v}"),
            Strength::Named(_) => f.write_str("auto-max"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default)]
    pub gamma: Strength,
    #[serde(default)]
    pub alpha: Strength,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Explicit grid; otherwise `gamma_count` log-spaced values up to the
    /// full-fusion bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_count: Option<usize>,
    /// Defaults to the single `penalty.alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Target cluster count. Without it, `gamma` and `alpha` are chosen by
    /// hold-out error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_frac: Option<f64>,
    /// Multiples of `alpha_scale`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// `one_step` or `full_solve`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive_rho: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fusion_tol: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<(Config, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.views.is_empty() {
            return Err(CliError::Config("at least one [[views]] entry is required".into()));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn solver_options(cfg: &SolverConfig) -> Result<gecco::Options, CliError> {
    let mut o = gecco::Options::default();
    if let Some(r) = cfg.rho {
        o.rho = r;
    }
    if let Some(m) = cfg.max_iter {
        o.max_iter = m;
    }
    if let Some(t) = cfg.tol {
        o.tol_primal = t;
        o.tol_dual = t;
    }
    if let Some(a) = cfg.adaptive_rho {
        o.adaptive_rho = a;
    }
    o.fusion_tol = cfg.fusion_tol;
    o.check_majorization = false;
    o.mode = match cfg.mode.as_deref() {
        None | Some("one_step") => gecco::SolverMode::OneStep,
        Some("full_solve") => gecco::SolverMode::FullSolve,
        Some(other) => {
            return Err(CliError::Config(format!(
                "solver.mode must be `one_step` or `full_solve`, got `{other}`"
            )))
        }
    };
    o.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(o)
}
