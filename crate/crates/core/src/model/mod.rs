//! The attention encoder-decoder with optional pointer-generator and
//! coverage mechanisms.
//!
//! Decoder state enters attention and the switch probability as
//! `[cell; hidden]` (width `2h`); the output layers read `[hidden; context]`
//! (width `3h`). The decoder input at every step is an affine map of
//! `[embedding(previous word); previous context]` down to `emb_dim`.

mod config;
mod decoder;
mod encoder;
mod graph;
mod loss;
mod params;
mod state;

pub use config::{Mode, ModelConfig};
pub use decoder::{attention, coverage_step, decoder_step, final_distribution, AttentionOutput};
pub use encoder::encode;
pub use graph::Graph;
pub use loss::{loss_and_grads, loss_fn, sequence_loss, LossReport, LOG_FLOOR};
pub use params::{count_params, names, param_specs, Init, ModelParams, ParamCount, ParamSpec, INIT_RANGE};
pub use state::{CoverageState, DecoderState, EncoderOutput, StepOutput};
