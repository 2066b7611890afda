use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Encoder states for one article.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `L x 2h` rows `[forward_i; backward_i]`; padded rows are zero.
    pub h: Tensor,
    /// `h * W_h`, cached because every decoder step needs it.
    pub features: Tensor,
    pub init_state: DecoderState,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Decoder LSTM state; both parts are `1 x h` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderState {
    pub cell: Tensor,
    pub hidden: Tensor,
}

impl DecoderState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self { cell: Tensor::zeros(&[1, hidden_dim]), hidden: Tensor::zeros(&[1, hidden_dim]) }
    }

    pub fn is_finite(&self) -> bool {
        self.cell.is_finite() && self.hidden.is_finite()
    }
}

/// Running sum of past attention distributions, one entry per source
/// position (`L x 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageState {
    pub c: Tensor,
}

impl CoverageState {
    pub fn zeros(source_len: usize) -> Self {
        Self { c: Tensor::zeros(&[source_len, 1]) }
    }

    pub fn total(&self) -> f64 {
        self.c.sum()
    }
}

/// Everything one decoder step produces.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Attention distribution over source positions.
    pub attn: Vec<f64>,
    /// Pre-softmax attention scores.
    pub scores: Vec<f64>,
    /// Context vector, `1 x 2h`.
    pub context: Tensor,
    pub p_gen: Option<f64>,
    pub vocab_dist: Vec<f64>,
    /// Distribution over the vocabulary followed by the extended slots.
    pub final_dist: Vec<f64>,
    pub covloss: Option<f64>,
    pub new_state: DecoderState,
    pub new_coverage: Option<CoverageState>,
}
