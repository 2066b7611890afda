//! Corpus ingestion, vocabulary, extended-vocabulary encoding and batching.

mod batch;
mod corpus;
mod example;
mod vocab;

pub use batch::{make_batches, Batch};
pub use corpus::{read_jsonl, tokenize, write_jsonl, RawExample};
pub use example::{encode_example, encode_raw, Example};
pub use vocab::{build_vocab, Vocabulary, PAD, RESERVED, START, STOP, UNK};
