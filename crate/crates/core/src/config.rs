//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convergence::{steps_for, StudySettings};
use crate::fem::MassMode;
use crate::integrator::{NemytskiiMode, Scheme};
use crate::matfunc::KrylovParams;
use crate::problems::{problem_by_name, problem_names, ProblemSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },

    #[error("invalid value for `{key}`: {message}")]
    ConstraintViolation { key: String, message: String },
}

impl ConfigError {
    fn violation(key: &str, message: impl Into<String>) -> Self {
        ConfigError::ConstraintViolation {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    #[default]
    Temporal,
    Spatial,
    SingleRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovConfig {
    pub m_max: usize,
    pub tol: f64,
    pub max_substeps: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        let p = KrylovParams::default();
        Self {
            m_max: p.m_max,
            tol: p.tol,
            max_substeps: p.max_substeps,
        }
    }
}

impl From<KrylovConfig> for KrylovParams {
    fn from(c: KrylovConfig) -> Self {
        KrylovParams {
            m_max: c.m_max,
            tol: c.tol,
            max_substeps: c.max_substeps,
        }
    }
}

fn default_levels() -> usize {
    5
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    #[serde(default)]
    pub study: StudyMode,
    /// Number of refinement levels (rows of the table).
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Mesh spacing; the finest spacing is `base_h / 2^(levels-1)` in spatial studies.
    #[serde(default)]
    pub base_h: Option<f64>,
    /// Time step; the finest step is `base_dt / 2^(levels-1)` in temporal studies.
    #[serde(default)]
    pub base_dt: Option<f64>,
    #[serde(default)]
    pub krylov: KrylovConfig,
    #[serde(default)]
    pub mass_mode: MassMode,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub nemytskii: NemytskiiMode,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    /// Times at which a single run records the solution.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Also write an SVG log-log plot.
    #[serde(default)]
    pub svg: bool,
}

const MAX_LEVELS: usize = 16;

/// A configuration checked against the problem registry.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub problem: ProblemSpec,
    pub h: f64,
    pub dt: f64,
    pub settings: StudySettings,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            if let Some(rest) = message.strip_prefix("unknown field `") {
                if let Some(end) = rest.find('`') {
                    return ConfigError::UnknownKey {
                        key: rest[..end].to_string(),
                    };
                }
            }
            ConfigError::Parse {
                line: e.line(),
                column: e.column(),
                message,
            }
        })
    }

    pub fn from_path(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json_str(&text)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every constraint and fills in problem defaults.
    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let problem = problem_by_name(&self.problem).ok_or_else(|| {
            ConfigError::violation(
                "problem",
                format!("unknown problem `{}`; available: {}", self.problem, problem_names().join(", ")),
            )
        })?;

        let min_levels = if self.study == StudyMode::SingleRun { 1 } else { 3 };
        if self.levels < min_levels || self.levels > MAX_LEVELS {
            return Err(ConfigError::violation(
                "levels",
                format!("must lie in [{min_levels}, {MAX_LEVELS}], got {}", self.levels),
            ));
        }

        let krylov = KrylovParams::from(self.krylov);
        krylov
            .validate()
            .map_err(|e| ConfigError::violation("krylov", e.to_string()))?;

        let (default_h, default_dt) = match self.study {
            StudyMode::Spatial => problem.defaults.spatial,
            StudyMode::Temporal | StudyMode::SingleRun => problem.defaults.temporal,
        };
        let h = self.base_h.unwrap_or(default_h);
        let dt = self.base_dt.unwrap_or(default_dt);
        if !(h.is_finite() && h > 0.0) {
            return Err(ConfigError::violation("base_h", format!("must be positive, got {h}")));
        }
        problem
            .cells_for(h)
            .map_err(|e| ConfigError::violation("base_h", e.to_string()))?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ConfigError::violation("base_dt", format!("must be positive, got {dt}")));
        }
        steps_for(problem.final_time, dt).map_err(|e| ConfigError::violation("base_dt", e.to_string()))?;

        for &t in &self.snapshot_times {
            if !(t >= 0.0 && t <= problem.final_time) {
                return Err(ConfigError::violation(
                    "snapshot_times",
                    format!("{t} lies outside [0, {}]", problem.final_time),
                ));
            }
        }

        let settings = StudySettings {
            mass_mode: self.mass_mode,
            scheme: self.scheme,
            nemytskii: self.nemytskii,
            krylov,
            ..StudySettings::default()
        };
        Ok(ResolvedConfig {
            config: self.clone(),
            problem,
            h,
            dt,
            settings,
        })
    }
}
