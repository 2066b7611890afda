//! Beam search over the extended vocabulary, decode output records, and
//! per-step inspection dumps.

mod beam;
mod output;

pub use beam::{beam_search, ids_to_words, DecodeConfig, Decoded, Hypothesis, StepRecord};
pub use output::{
    decode_all, decoded_record, inspect_decode, read_records, split_sentences, write_records, DecodedRecord,
    InspectRecord,
};
