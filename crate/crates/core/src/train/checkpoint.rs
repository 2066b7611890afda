//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `PGCOVCK1`, a little-endian `u64` byte length,
//! that many bytes of UTF-8 JSON manifest, then the payload: every tensor as
//! little-endian IEEE-754 binary64, in manifest order (parameters first,
//! then Adagrad accumulators).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adagrad::AdagradState;
use super::trainer::TrainConfig;
use crate::error::{Error, Result};
use crate::grad::ParamSet;
use crate::model::{Mode, ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PGCOVCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed optimizer steps.
    pub step: u64,
    pub mode: Mode,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub best_valid_loss: Option<f64>,
    pub evals_since_best: usize,
    /// Resolved run configuration, when the checkpoint came from the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<serde_json::Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Param,
    Accumulator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestGroup {
    pub kind: GroupKind,
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: CheckpointMeta,
    pub groups: Vec<ManifestGroup>,
    pub payload_bytes: u64,
}

/// Model weights, optimizer state and training metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: AdagradState,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Step-zero state for freshly initialized parameters.
    pub fn fresh(params: ModelParams, train: &TrainConfig) -> Self {
        let optimizer = AdagradState::new(&params.tensors, train.init_accumulator);
        let meta = CheckpointMeta {
            step: 0,
            mode: params.config.mode(),
            model: params.config.clone(),
            train: train.clone(),
            best_valid_loss: None,
            evals_since_best: 0,
            config_echo: None,
        };
        Self { params, optimizer, meta }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut groups = Vec::new();
        let mut payload = Vec::with_capacity(16 * self.params.num_params());
        let sets = [(GroupKind::Param, &self.params.tensors), (GroupKind::Accumulator, &self.optimizer.accumulators)];
        for (kind, set) in sets {
            for (name, t) in set.iter() {
                groups.push(ManifestGroup {
                    kind,
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset: payload.len() as u64,
                });
                for x in t.data() {
                    payload.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let manifest = Manifest { meta: self.meta.clone(), groups, payload_bytes: payload.len() as u64 };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing PGCOVCK1 magic"));
        }
        let json_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json_end = 16usize.checked_add(json_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..json_end])?;
        let payload = &bytes[json_end..];
        if payload.len() as u64 != manifest.payload_bytes {
            return Err(bad("payload length disagrees with manifest"));
        }

        let mut params = ParamSet::new();
        let mut accumulators = ParamSet::new();
        for g in &manifest.groups {
            let n: usize = g.shape.iter().product();
            let start = g.offset as usize;
            let end = start.checked_add(n * 8).filter(|&e| e <= payload.len()).ok_or_else(|| bad("group outside payload"))?;
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(g.shape.clone(), data)?;
            match g.kind {
                GroupKind::Param => params.insert(g.name.clone(), t),
                GroupKind::Accumulator => accumulators.insert(g.name.clone(), t),
            }
        }
        let model = ModelParams::from_tensors(manifest.meta.model.clone(), params)?;
        let acc_names: Vec<&str> = accumulators.names().collect();
        let param_names: Vec<&str> = model.tensors.names().collect();
        if acc_names != param_names {
            return Err(bad("accumulators do not match parameters"));
        }
        for ((_, a), (_, p)) in accumulators.iter().zip(model.tensors.iter()) {
            if a.shape() != p.shape() {
                return Err(bad("accumulator shape mismatch"));
            }
        }
        Ok(Self { params: model, optimizer: AdagradState { accumulators }, meta: manifest.meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and rejects checkpoints whose shapes differ from `expected`.
    pub fn load_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.check_config(expected)?;
        Ok(ck)
    }

    pub fn check_config(&self, expected: &ModelConfig) -> Result<()> {
        let want = crate::model::param_specs(expected);
        let have = crate::model::param_specs(&self.params.config);
        if want != have {
            return Err(Error::Checkpoint(format!(
                "checkpoint shapes (hidden {}, emb {}, vocab {}, {}) do not match the active config (hidden {}, emb {}, vocab {}, {})",
                self.params.config.hidden_dim,
                self.params.config.emb_dim,
                self.params.config.vocab_size,
                self.params.config.mode(),
                expected.hidden_dim,
                expected.emb_dim,
                expected.vocab_size,
                expected.mode(),
            )));
        }
        Ok(())
    }
}

/// Switches a pointer-generator checkpoint to coverage mode: a zero `w_c`
/// (so attention is initially unchanged), a fresh accumulator for it, and
/// everything else carried over. Early-stopping bookkeeping restarts since
/// the objective changes.
pub fn enable_coverage(checkpoint: &Checkpoint) -> Result<Checkpoint> {
    if checkpoint.params.config.use_coverage {
        return Err(Error::InvalidArgument("checkpoint is already in coverage mode".into()));
    }
    if !checkpoint.params.config.use_pointer {
        return Err(Error::InvalidArgument("coverage fine-tuning starts from a pointer-generator checkpoint".into()));
    }
    let params = checkpoint.params.with_coverage()?;
    let optimizer = checkpoint
        .optimizer
        .extended_to(&params.tensors, checkpoint.meta.train.init_accumulator);
    let meta = CheckpointMeta {
        mode: Mode::Coverage,
        model: params.config.clone(),
        best_valid_loss: None,
        evals_since_best: 0,
        ..checkpoint.meta.clone()
    };
    Ok(Checkpoint { params, optimizer, meta })
}
