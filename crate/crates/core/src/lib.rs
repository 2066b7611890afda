//! Attention encoder-decoder summarizer with a pointer-generator copy
//! mechanism and a coverage mechanism, built on a small reverse-mode
//! differentiation core.
//!
//! Layout:
//!
//! - [`tensor`], [`autodiff`], [`grad`]: dense `f64` tensors, the tape, and
//!   gradient utilities (global-norm clipping, finite-difference checking).
//! - [`text`]: vocabulary, per-example extended-vocabulary encoding, batching.
//! - [`model`]: encoder, attention, decoder step, loss, parameter counting.
//! - [`train`]: Adagrad, the training loop, coverage fine-tuning, checkpoints.
//! - [`decode`]: beam search over the extended vocabulary and inspection dumps.
//! - [`eval`]: ROUGE, lead-3, repetition / novelty / p_gen statistics.
//! - [`config`], [`synthetic`]: run configuration and synthetic corpora.

pub mod autodiff;
pub mod config;
pub mod decode;
pub mod error;
pub mod eval;
pub mod grad;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod text;
pub mod train;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use grad::{clip_by_global_norm, grad_check, GradCheckReport, GradientSet, ParamSet};
pub use tensor::Tensor;
