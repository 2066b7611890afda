use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Pointer,
    Coverage,
}

impl Mode {
    pub fn use_pointer(self) -> bool {
        !matches!(self, Mode::Baseline)
    }

    pub fn use_coverage(self) -> bool {
        matches!(self, Mode::Coverage)
    }

    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Pointer, Mode::Coverage];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Pointer => "pointer",
            Mode::Coverage => "coverage",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "pointer" => Ok(Mode::Pointer),
            "coverage" => Ok(Mode::Coverage),
            _ => Err(Error::Config(format!("unknown mode {s:?} (baseline | pointer | coverage)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub emb_dim: usize,
    /// Vocabulary size including the four reserved ids.
    pub vocab_size: usize,
    pub use_pointer: bool,
    pub use_coverage: bool,
    pub max_enc: usize,
    pub max_dec: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            emb_dim: 128,
            vocab_size: 50_000,
            use_pointer: false,
            use_coverage: false,
            max_enc: 400,
            max_dec: 100,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.use_pointer = mode.use_pointer();
        self.use_coverage = mode.use_coverage();
        self
    }

    /// Width of encoder states, attention features, `v` and `w_c`.
    pub fn attn_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn mode(&self) -> Mode {
        match (self.use_pointer, self.use_coverage) {
            (false, false) => Mode::Baseline,
            (true, false) => Mode::Pointer,
            (_, true) => Mode::Coverage,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.emb_dim == 0 {
            return Err(Error::Config("hidden_dim and emb_dim must be at least 1".into()));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config("vocab_size must be at least 5".into()));
        }
        if self.max_enc == 0 || self.max_dec == 0 {
            return Err(Error::Config("max_enc and max_dec must be at least 1".into()));
        }
        Ok(())
    }
}
