use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One corpus line: pre-tokenized, lowercased text with tokens separated by
/// whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub article: String,
    pub abstract_sentences: Vec<String>,
}

impl RawExample {
    pub fn article_tokens(&self) -> Vec<String> {
        tokenize(&self.article)
    }

    /// Abstract sentences joined with single spaces, tokenized.
    pub fn abstract_tokens(&self) -> Vec<String> {
        self.abstract_sentences.iter().flat_map(|s| tokenize(s)).collect()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: RawExample = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[RawExample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
