//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # comment
//! model.alpha = 0.5
//! model.drift.kind = linear
//! run.seed = 7
//! ```
//!
//! The same format is used for manifests, so a manifest is itself a valid
//! configuration and reproduces the run it describes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::mlmc::ZcbModel;
use crate::model::{CevModel, DriftSpec, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}` = `{value}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: format!("bad key `{key}`"),
                });
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Sets `key` only if absent.
    pub fn set_default(&mut self, key: &str, value: impl ToString) {
        self.entries
            .entry(key.to_string())
            .or_insert_with(|| value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str, ConfigError> {
        self.get_str(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>, ConfigError>
    where
        V::Err: std::fmt::Display,
    {
        self.get_str(key)
            .map(|v| {
                v.parse::<V>().map_err(|e| ConfigError::Invalid {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn require<V: FromStr>(&self, key: &str) -> Result<V, ConfigError>
    where
        V::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V, ConfigError>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// `lo..hi` or `lo..=hi`, both inclusive.
    pub fn get_range(
        &self,
        key: &str,
    ) -> Result<Option<std::ops::RangeInclusive<u32>>, ConfigError> {
        let Some(v) = self.get_str(key) else {
            return Ok(None);
        };
        let invalid = |reason: &str| ConfigError::Invalid {
            key: key.into(),
            value: v.into(),
            reason: reason.into(),
        };
        let (lo, hi) = v
            .split_once("..")
            .ok_or_else(|| invalid("expected `lo..hi`"))?;
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: u32 = lo.trim().parse().map_err(|_| invalid("bad lower bound"))?;
        let hi: u32 = hi.trim().parse().map_err(|_| invalid("bad upper bound"))?;
        if lo > hi {
            return Err(invalid("empty range"));
        }
        Ok(Some(lo..=hi))
    }

    /// Sorted `key = value` lines, preceded by `header` comment lines.
    pub fn render(&self, header: &[&str]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Builds the SDE from `model.*` keys. Only `model.drift.kind = linear` is
/// expressible in a file.
pub fn model_from_config(cfg: &Config) -> Result<CevModel<f64>, ConfigError> {
    let x0 = cfg.require("model.x0")?;
    let sigma = cfg.require("model.sigma")?;
    let alpha = cfg.require("model.alpha")?;
    let horizon = cfg.require("model.T")?;
    let kind = cfg.get_str("model.drift.kind").unwrap_or("linear");
    if kind != "linear" {
        return Err(ConfigError::Invalid {
            key: "model.drift.kind".into(),
            value: kind.into(),
            reason: "only `linear` drifts can be configured".into(),
        });
    }
    let a = cfg.require("model.drift.a")?;
    let b = cfg.require("model.drift.b")?;
    Ok(CevModel::new(
        x0,
        sigma,
        alpha,
        DriftSpec::linear(a, b),
        horizon,
    )?)
}

/// Writes `model.*` keys describing `b(x) = a - b x`.
pub fn write_linear_model(
    cfg: &mut Config,
    x0: f64,
    sigma: f64,
    alpha: f64,
    a: f64,
    b: f64,
    horizon: f64,
) {
    cfg.set("model.x0", x0);
    cfg.set("model.sigma", sigma);
    cfg.set("model.alpha", alpha);
    cfg.set("model.T", horizon);
    cfg.set("model.drift.kind", "linear");
    cfg.set("model.drift.a", a);
    cfg.set("model.drift.b", b);
}

pub fn zcb_from_config(cfg: &Config) -> Result<ZcbModel<f64>, ConfigError> {
    let get = |k: &str| cfg.require::<f64>(k);
    ZcbModel::new(
        get("zcb.a")?,
        get("zcb.b")?,
        get("zcb.sigma")?,
        get("zcb.r0")?,
        get("zcb.T")?,
    )
    .map_err(|e| match e {
        crate::mlmc::MlmcError::Model(m) => ConfigError::Model(m),
        other => ConfigError::Invalid {
            key: "zcb".into(),
            value: String::new(),
            reason: other.to_string(),
        },
    })
}
