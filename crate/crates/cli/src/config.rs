//! Run configuration: built-in defaults, overlaid by a JSON file, overlaid by flags.

use std::path::Path;

use great_core::model::ModelConfig;
use great_core::pipeline::{FeatureFlags, TrainConfig};
use great_core::spectral::HksOptions;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for preprocessing and fold-parallel training; 0 = all cores.
    pub jobs: usize,
    pub folds: usize,
    pub model: ModelConfig,
    /// `train.seed` always mirrors the top-level `seed`.
    pub train: TrainConfig,
    pub features: FeatureFlags,
    pub hks: HksOptions,
    pub geodesic_time: f64,
}

impl RunConfig {
    pub fn pretrain_defaults() -> Self {
        let hks = HksOptions::default();
        Self {
            seed: 0,
            jobs: 0,
            folds: 8,
            model: ModelConfig {
                c_in: 3,
                c_out: hks.times,
                decode: false,
                ..ModelConfig::default()
            },
            train: TrainConfig::pretrain(),
            features: FeatureFlags::default(),
            hks,
            geodesic_time: 1.0,
        }
    }

    pub fn finetune_defaults() -> Self {
        Self {
            model: ModelConfig {
                c_out: 3,
                decode: true,
                ..ModelConfig::default()
            },
            train: TrainConfig::finetune(),
            ..Self::pretrain_defaults()
        }
    }

    /// `defaults`, then the file at `path` (if any), then `overrides`.
    pub fn resolve(defaults: Self, path: Option<&Path>, overrides: Value) -> Result<Self, CliError> {
        let mut value = serde_json::to_value(&defaults)?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)?;
            let file: Value = serde_json::from_str(&text)?;
            if !file.is_object() {
                return Err(CliError::Config(format!("{}: top level must be an object", p.display())));
            }
            merge(&mut value, file);
        }
        merge(&mut value, overrides);
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }
}

/// Recursive object merge; non-object values in `over` replace those in `base`.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Builds a nested override object from dotted keys, skipping unset flags.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set(&mut self, key: &str, v: Option<impl Into<Value>>) -> &mut Self {
        if let Some(v) = v {
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().expect("non-empty key");
            let mut node = &mut self.0;
            for p in parts {
                node = node
                    .entry(p)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("override paths do not collide");
            }
            node.insert(last.to_string(), v.into());
        }
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}
