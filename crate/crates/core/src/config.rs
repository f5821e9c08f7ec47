//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::ingest::IngestConfig;
use crate::model::Hyperpriors;
use crate::spatial::WeightConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("config key '{key}': invalid value '{value}'")]
    InvalidValue { key: String, value: String },
}

pub const KNOWN_KEYS: &[&str] = &[
    "target_time_index",
    "window_years",
    "window_end_year",
    "covariate_aggregation",
    "covariates",
    "standardize_covariates",
    "ig_shape",
    "ig_rate",
    "tau2_shape",
    "tau2_rate",
    "irw_order",
    "covariate_link",
    "exponent_a",
    "exponent_b",
    "rho_grid_size",
    "cpo_max_log_range",
    "restrict_to_spatial",
];

/// Everything a run can be configured with besides the chain settings that
/// come from command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub hyperpriors: Hyperpriors,
    pub weights: WeightConfig,
    pub rho_grid_size: usize,
    pub cpo_max_log_range: f64,
    /// Fit only on areas that survive weight-system pruning.
    pub restrict_to_spatial: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ingest: IngestConfig::default(),
            hyperpriors: Hyperpriors::default(),
            weights: WeightConfig::default(),
            rho_grid_size: 201,
            cpo_max_log_range: 30.0,
            restrict_to_spatial: true,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_lines(&text)
    }

    pub fn from_str_lines(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: n + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: n + 1,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = || ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "target_time_index" => self.ingest.target_time_index = Some(parse(key, value)?),
            "window_years" => self.ingest.window_years = Some(parse(key, value)?),
            "window_end_year" => self.ingest.window_end_year = Some(parse(key, value)?),
            "covariate_aggregation" => {
                self.ingest.aggregation = value.parse().map_err(|_| invalid())?
            }
            "covariates" => {
                let names: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                self.ingest.covariate_whitelist = Some(names);
            }
            "standardize_covariates" => self.ingest.standardize = parse(key, value)?,
            "ig_shape" => self.hyperpriors.variance_prior.shape = parse(key, value)?,
            "ig_rate" => self.hyperpriors.variance_prior.rate = parse(key, value)?,
            "tau2_shape" => self.hyperpriors.tau2_prior.shape = parse(key, value)?,
            "tau2_rate" => self.hyperpriors.tau2_prior.rate = parse(key, value)?,
            "irw_order" => self.hyperpriors.irw_order = parse(key, value)?,
            "covariate_link" => {
                if value != "linear" {
                    return Err(invalid());
                }
            }
            "exponent_a" => self.weights.exponent_a = parse(key, value)?,
            "exponent_b" => self.weights.exponent_b = parse(key, value)?,
            "rho_grid_size" => self.rho_grid_size = parse(key, value)?,
            "cpo_max_log_range" => self.cpo_max_log_range = parse(key, value)?,
            "restrict_to_spatial" => self.restrict_to_spatial = parse(key, value)?,
            _ => unreachable!("key checked against KNOWN_KEYS"),
        }
        Ok(())
    }

    /// Fully resolved key/value view, for run manifests.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let ing = &self.ingest;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".to_string());
        let mut m = BTreeMap::new();
        m.insert(
            "target_time_index".into(),
            opt(ing.target_time_index.map(|v| v.to_string())),
        );
        m.insert(
            "window_years".into(),
            opt(ing.window_years.map(|v| v.to_string())),
        );
        m.insert(
            "window_end_year".into(),
            opt(ing.window_end_year.map(|v| v.to_string())),
        );
        m.insert("covariate_aggregation".into(), ing.aggregation.to_string());
        m.insert(
            "covariates".into(),
            ing.covariate_whitelist
                .as_ref()
                .map(|w| w.join(","))
                .unwrap_or_else(|| "all".into()),
        );
        m.insert("standardize_covariates".into(), ing.standardize.to_string());
        m.insert(
            "ig_shape".into(),
            self.hyperpriors.variance_prior.shape.to_string(),
        );
        m.insert(
            "ig_rate".into(),
            self.hyperpriors.variance_prior.rate.to_string(),
        );
        m.insert(
            "tau2_shape".into(),
            self.hyperpriors.tau2_prior.shape.to_string(),
        );
        m.insert(
            "tau2_rate".into(),
            self.hyperpriors.tau2_prior.rate.to_string(),
        );
        m.insert("irw_order".into(), self.hyperpriors.irw_order.to_string());
        m.insert("covariate_link".into(), "linear".into());
        m.insert("exponent_a".into(), self.weights.exponent_a.to_string());
        m.insert("exponent_b".into(), self.weights.exponent_b.to_string());
        m.insert("rho_grid_size".into(), self.rho_grid_size.to_string());
        m.insert(
            "cpo_max_log_range".into(),
            self.cpo_max_log_range.to_string(),
        );
        m.insert(
            "restrict_to_spatial".into(),
            self.restrict_to_spatial.to_string(),
        );
        m
    }
}
