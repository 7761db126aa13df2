//! Flat `key = value` configuration.
//!
//! ```text
//! # comment
//! model = models/model.json
//! threshold = 0.5
//! pelican.lookahead = 3
//! ```
//!
//! Keys: `model`, `corpus`, `pool`, `threshold`, `freq_detect_threshold`,
//! `rng_seed`, `budget`, `batch`, `pelican.k`, `pelican.h_hours`,
//! `pelican.detect_threshold`, `pelican.layer_accept`, `pelican.lookahead`.
//! Missing keys take their defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use phishlab_core::pelican::PelicanConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("config key {key}: {reason}")]
    Range { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    /// Overrides the model's decision threshold.
    pub threshold: Option<f64>,
    /// Overrides the model's frequency detection threshold.
    pub freq_detect_threshold: Option<f64>,
    pub rng_seed: u64,
    pub budget: usize,
    pub batch: usize,
    pub pelican: PelicanConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: None,
            corpus: None,
            pool: None,
            threshold: None,
            freq_detect_threshold: None,
            rng_seed: 0,
            budget: 2000,
            batch: 3,
            pelican: PelicanConfig::default(),
        }
    }
}

fn number<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Syntax {
        line,
        reason: format!("{key} expects a number, got {value:?}"),
    })
}

fn range(key: &str, ok: bool, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range {
            key: key.to_string(),
            reason: reason.to_string(),
        })
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected key = value, got {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => c.model = Some(value.into()),
                "corpus" => c.corpus = Some(value.into()),
                "pool" => c.pool = Some(value.into()),
                "threshold" => c.threshold = Some(number(key, value, line)?),
                "freq_detect_threshold" => c.freq_detect_threshold = Some(number(key, value, line)?),
                "rng_seed" => c.rng_seed = number(key, value, line)?,
                "budget" => c.budget = number(key, value, line)?,
                "batch" => c.batch = number(key, value, line)?,
                "pelican.k" => c.pelican.k = number(key, value, line)?,
                "pelican.h_hours" => c.pelican.h_hours = number(key, value, line)?,
                "pelican.detect_threshold" => c.pelican.detect_threshold = number(key, value, line)?,
                "pelican.layer_accept" => c.pelican.layer_accept = number(key, value, line)?,
                "pelican.lookahead" => c.pelican.lookahead = number(key, value, line)?,
                _ => {
                    return Err(ConfigError::Syntax {
                        line,
                        reason: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Config::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(t) = self.threshold {
            range("threshold", t > 0.0 && t < 1.0, "must lie in (0, 1)")?;
        }
        if let Some(t) = self.freq_detect_threshold {
            range("freq_detect_threshold", (0.0..=1.0).contains(&t), "must lie in [0, 1]")?;
        }
        range("batch", self.batch >= 1, "must be at least 1")?;
        let p = &self.pelican;
        range("pelican.k", p.k >= 1, "must be at least 1")?;
        range("pelican.h_hours", p.h_hours > 0.0 && p.h_hours.is_finite(), "must be positive")?;
        range(
            "pelican.detect_threshold",
            (0.0..=1.0).contains(&p.detect_threshold),
            "must lie in [0, 1]",
        )?;
        range("pelican.layer_accept", (0.0..=1.0).contains(&p.layer_accept), "must lie in [0, 1]")?;
        Ok(())
    }
}
