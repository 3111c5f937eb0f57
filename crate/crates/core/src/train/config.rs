//! Flat key/value run configuration: every model key plus the optimisation
//! settings, readable from TOML and overridable key by key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global-norm clipping threshold; 0 disables clipping.
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Training passages are cut to this many tokens.
    pub max_passage_len: usize,
    /// Optional cap on decoded span length during dev evaluation; 0 = none.
    pub max_span_len: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            batch_size: 32,
            epochs: 20,
            seed: 1,
            clip_norm: 5.0,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_passage_len: 400,
            max_span_len: 0,
        }
    }
}

impl Hyper {
    pub fn clip(&self) -> Option<f64> {
        (self.clip_norm > 0.0).then_some(self.clip_norm)
    }

    pub fn span_cap(&self) -> Option<usize> {
        (self.max_span_len > 0).then_some(self.max_span_len)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(flatten)]
    pub hyper: Hyper,
}

fn known_keys() -> Vec<String> {
    let table: toml::Table =
        toml::Table::try_from(TrainConfig::default()).expect("config serializes");
    table.keys().cloned().collect()
}

impl TrainConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let h = &self.hyper;
        if h.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if h.max_passage_len == 0 {
            return Err(Error::Config("max_passage_len must be at least 1".into()));
        }
        if !(h.learning_rate > 0.0)
            || !(0.0..1.0).contains(&h.beta1)
            || !(0.0..1.0).contains(&h.beta2)
            || !(h.eps > 0.0)
        {
            return Err(Error::Config("optimizer settings out of range".into()));
        }
        if h.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be at most {}", i64::MAX)));
        }
        if !(h.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<TrainConfig> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<TrainConfig> {
        let known = known_keys();
        if let Some(k) = table.keys().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("unknown configuration key `{k}`")));
        }
        let cfg: TrainConfig = table
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces one key; `value` is parsed with the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.apply(&[(key.to_owned(), value.to_owned())])
    }

    /// Applies `key = value` overrides in order.
    pub fn apply(&mut self, overrides: &[(String, String)]) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        for (key, value) in overrides {
            let current = table
                .get(key)
                .ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
            let parsed = match current {
                toml::Value::Boolean(_) => value
                    .parse()
                    .map(toml::Value::Boolean)
                    .map_err(|e| e.to_string()),
                toml::Value::Integer(_) => value
                    .parse()
                    .map(toml::Value::Integer)
                    .map_err(|e| e.to_string()),
                toml::Value::Float(_) => value
                    .parse()
                    .map(toml::Value::Float)
                    .map_err(|e| e.to_string()),
                _ => Ok(toml::Value::String(value.clone())),
            }
            .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))?;
            table.insert(key.clone(), parsed);
        }
        *self = Self::from_table(table)?;
        Ok(())
    }
}
