//! Run configuration: every module's settings plus file paths, read from a
//! JSON object with flat dotted keys (`"train.learning_rate": 0.15`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::decode::DecodeConfig;
use crate::error::{Error, Result};
use crate::model::{Mode, ModelConfig};
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    /// Checkpoint to start from; coverage runs fine-tune a pointer model.
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Overrides `model.use_pointer` and `model.use_coverage`.
    pub mode: Mode,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub paths: Paths,
    /// Allow coverage mode without a pointer-generator checkpoint.
    pub coverage_from_scratch: bool,
    /// Seed for parameter initialization.
    pub init_seed: u64,
    /// Score ROUGE-L with one LCS over whole summaries.
    pub plain_lcs: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            paths: Paths::default(),
            coverage_from_scratch: false,
            init_seed: 0,
            plain_lcs: false,
        }
    }
}

fn flatten_into(prefix: &str, v: Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf);
        }
    }
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), v.clone());
            } else {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("config keys nest consistently");
            }
        }
    }
    Value::Object(root)
}

impl RunConfig {
    /// The resolved configuration as dotted keys.
    pub fn flatten(&self) -> Map<String, Value> {
        let mut out = Map::new();
        flatten_into("", serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn from_flat(flat: &Map<String, Value>) -> Result<Self> {
        let known = RunConfig::default().flatten();
        if let Some(k) = flat.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        let mut merged = known;
        for (k, v) in flat {
            merged.insert(k.clone(), v.clone());
        }
        serde_json::from_value(unflatten(&merged)).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a JSON object of dotted keys; missing keys keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        };
        if let Some((k, _)) = map.iter().find(|(_, v)| v.is_object()) {
            return Err(Error::Config(format!("{}: key {k:?} is nested; use dotted keys", path.display())));
        }
        Self::from_flat(&map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.echo())?)?;
        Ok(())
    }

    /// Sets one dotted key from command-line text. The text is read as JSON
    /// when it parses, otherwise as a string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut flat = self.flatten();
        if !flat.contains_key(key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        let parsed = serde_json::from_str::<Value>(raw).ok();
        let mut first_err = None;
        for candidate in parsed.into_iter().chain([Value::String(raw.to_string())]) {
            flat.insert(key.to_string(), candidate);
            match Self::from_flat(&flat) {
                Ok(cfg) => {
                    *self = cfg;
                    return Ok(());
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        Err(Error::Config(format!(
            "bad value {raw:?} for {key}: {}",
            first_err.expect("at least one attempt")
        )))
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Model settings with the mode flags applied.
    pub fn model_config(&self) -> ModelConfig {
        self.model.clone().with_mode(self.mode)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        self.decode.validate()?;
        if self.mode == Mode::Coverage && self.paths.init_checkpoint.is_none() && !self.coverage_from_scratch {
            return Err(Error::Config(
                "coverage mode needs paths.init_checkpoint (a pointer-mode checkpoint) or coverage_from_scratch=true"
                    .into(),
            ));
        }
        Ok(())
    }

    /// The resolved configuration embedded in output artifacts.
    pub fn echo(&self) -> Value {
        let mut cfg = self.clone();
        cfg.model = cfg.model_config();
        Value::Object(cfg.flatten())
    }
}
