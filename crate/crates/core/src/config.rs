//! Run configuration files: flat `key = value` lines (a TOML subset), one
//! key per model or solver setting. Strings are quoted, `#` starts a
//! comment, and unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Boundary, GridError, RadialGrid};
use crate::params::{ModelParams, ParamError};
use crate::solver::{Budget, SolverConfig, Terms};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{key}`: {source}")]
    Params {
        key: &'static str,
        #[source]
        source: ParamError,
    },
    #[error("config key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Every recognized key; absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub dim: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub radius: f64,
    pub intervals: usize,
    pub boundary: Boundary,
    pub dt_safety: f64,
    pub blowup_cap: f64,
    pub record_stride: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_growth: Option<f64>,
    /// Remaining time of the profile-seeded initial data.
    pub t_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_secs: Option<f64>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            p: 4.0,
            q: 3.0,
            mu: 0.1,
            dim: 1,
            beta: None,
            radius: 1.0,
            intervals: 1024,
            boundary: Boundary::DirichletZero,
            dt_safety: 0.5,
            blowup_cap: SolverConfig::DEFAULT_CAP,
            record_stride: 1000,
            record_growth: Some(1.02),
            t_star: 0.01,
            t_hint: None,
            max_steps: Some(50_000_000),
            t_end: None,
            wall_secs: None,
        }
    }
}

/// Validated configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub t_star: f64,
}

impl RunConfig {
    pub fn params(&self) -> &ModelParams {
        &self.solver.params
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Applies a `key=value` override (same syntax as a file line).
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Value {
            key: assignment.to_string(),
            message: "expected key=value".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let mut table = toml::Table::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            // bare words such as `neumann-zero` are taken as strings
            Err(_) => toml::Value::String(value.to_string()),
        };
        table.insert(key.to_string(), parsed);
        let next: ConfigFile = table.try_into().map_err(|e: toml::de::Error| ConfigError::Value {
            key: key.to_string(),
            message: e.message().to_string(),
        })?;
        *self = next;
        Ok(())
    }

    /// Canonical text form; parses back to the same configuration.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let params = ModelParams::validate(self.p, self.q, self.mu, self.dim, self.beta).map_err(|source| {
            let key = match source {
                ParamError::PTooSmall(_) => "p",
                ParamError::QLowerBound { .. } | ParamError::QUpperBound { .. } | ParamError::QNotAboveOne(_) => "q",
                ParamError::Dimension(_) => "dim",
                ParamError::BetaOutsideWindow { .. } | ParamError::EmptyBetaWindow { .. } => "beta",
                ParamError::NonFinite(name) => name,
            };
            ConfigError::Params { key, source }
        })?;
        let grid = RadialGrid::new(self.radius, self.intervals, self.dim)?;
        let solver = SolverConfig {
            grid,
            params,
            dt_safety: self.dt_safety,
            blowup_cap: self.blowup_cap,
            boundary: self.boundary,
            record_stride: self.record_stride,
            record_growth: self.record_growth,
            t_hint: self.t_hint,
            budget: Budget {
                max_steps: self.max_steps,
                t_end: self.t_end,
                wall_secs: self.wall_secs,
            },
            terms: Terms::FULL,
        };
        solver.validate().map_err(|e| ConfigError::Value {
            key: "solver".into(),
            message: e.to_string(),
        })?;
        if !(self.t_star > 0.0 && self.t_star < 1.0) {
            return Err(ConfigError::Value {
                key: "t_star".into(),
                message: format!("must lie in (0, 1), got {}", self.t_star),
            });
        }
        Ok(RunConfig {
            solver,
            t_star: self.t_star,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build() {
        let cfg = ConfigFile::parse("").unwrap().build().unwrap();
        assert_eq!(cfg.params().p(), 4.0);
        assert_eq!(cfg.solver.grid.intervals(), 1024);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ConfigFile::default();
        c.mu = -0.25;
        c.boundary = Boundary::NeumannZero;
        c.t_end = Some(0.005);
        let back = ConfigFile::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_strings() {
        let text = "# a run\np = 4.5   # exponent\nboundary = \"neumann-zero\"\nintervals = 512\n";
        let c = ConfigFile::parse(text).unwrap();
        assert_eq!(c.p, 4.5);
        assert_eq!(c.boundary, Boundary::NeumannZero);
        assert_eq!(c.intervals, 512);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ConfigFile::parse("p = 4\nqq = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("qq"), "{err}");
    }

    #[test]
    fn bad_value_reports_line_and_key() {
        let err = ConfigFile::parse("p = 4\n\nintervals = \"many\"\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("intervals"), "{err}");
    }

    #[test]
    fn violated_bound_names_key() {
        let err = ConfigFile::parse("q = 5\n").unwrap().build().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`q`") && msg.contains("q upper bound violated"), "{msg}");
        assert!(msg.contains("N(p-1)/2 + (p+1)/2 = 4"), "{msg}");
    }

    #[test]
    fn overrides() {
        let mut c = ConfigFile::default();
        c.set("intervals=256").unwrap();
        c.set("boundary=neumann-zero").unwrap();
        c.set("mu = -0.5").unwrap();
        assert_eq!((c.intervals, c.boundary, c.mu), (256, Boundary::NeumannZero, -0.5));
        assert!(c.set("nope=1").is_err());
        assert!(c.set("intervals").is_err());
    }
}
