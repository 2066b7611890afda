use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beam::{beam_search, ids_to_words, DecodeConfig, Decoded};
use crate::error::Result;
use crate::model::ModelParams;
use crate::text::{Example, Vocabulary};

/// One line of decode output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedRecord {
    pub article: String,
    pub reference: Vec<String>,
    pub decoded: Vec<String>,
}

/// Per-step view of the winning hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectRecord {
    pub article: Vec<String>,
    /// Chosen tokens, one per step (STOP included when emitted).
    pub tokens: Vec<String>,
    pub token_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_gen: Option<Vec<f64>>,
    /// `attention[t][i]`: weight on source position `i` at step `t`.
    pub attention: Vec<Vec<f64>>,
    /// Coverage after the final step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Vec<f64>>,
}

/// Groups tokens into sentences, closing one after every ".".
pub fn split_sentences(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for t in tokens {
        cur.push(t);
        if t == "." {
            out.push(cur.join(" "));
            cur.clear();
        }
    }
    if !cur.is_empty() {
        out.push(cur.join(" "));
    }
    out
}

pub fn decoded_record(example: &Example, decoded: &Decoded) -> DecodedRecord {
    DecodedRecord {
        article: example.article.join(" "),
        reference: example.abstract_sentences.clone(),
        decoded: split_sentences(&decoded.words),
    }
}

/// Beam-decodes `example` and lays out the winner step by step.
pub fn inspect_decode(params: &ModelParams, example: &Example, vocab: &Vocabulary, config: &DecodeConfig) -> Result<InspectRecord> {
    let decoded = beam_search(params, example, vocab, config)?;
    let best = &decoded.best;
    let tokens = best
        .emitted()
        .iter()
        .map(|&id| {
            if id == crate::text::STOP {
                Ok(crate::text::RESERVED[id].to_string())
            } else {
                ids_to_words(&[id], vocab, &example.article_oovs).map(|mut w| w.remove(0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InspectRecord {
        article: example.article.clone(),
        tokens,
        token_ids: best.emitted().to_vec(),
        p_gen: params
            .config
            .use_pointer
            .then(|| best.records.iter().map(|r| r.p_gen.unwrap_or(f64::NAN)).collect()),
        attention: best.records.iter().map(|r| r.attn.clone()).collect(),
        coverage: best.coverage.as_ref().map(|c| c.c.data().to_vec()),
    })
}

/// Decodes every example, in parallel, keeping input order.
pub fn decode_all(params: &ModelParams, examples: &[Example], vocab: &Vocabulary, config: &DecodeConfig) -> Result<Vec<Decoded>> {
    examples.par_iter().map(|e| beam_search(params, e, vocab, config)).collect()
}

pub fn write_records<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    #[test]
    fn sentences_close_on_period() {
        assert_eq!(split_sentences(&toks("a b . c . d")), ["a b .", "c .", "d"]);
        assert!(split_sentences(&[]).is_empty());
    }
}
