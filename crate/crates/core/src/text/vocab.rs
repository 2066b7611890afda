use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;

/// Spellings of the reserved ids, in id order.
pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[START]", "[STOP]"];

/// Fixed word/id maps. Ids `0..4` are reserved; the rest are corpus words in
/// rank order.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_ranked(ranked: impl IntoIterator<Item = (String, u64)>, cap: usize) -> Self {
        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; RESERVED.len()];
        let mut index: HashMap<String, usize> =
            words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        for (w, c) in ranked {
            if words.len() >= cap {
                break;
            }
            if index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), words.len());
            words.push(w);
            counts.push(c);
        }
        Self { words, counts, index }
    }

    /// Total id count including the reserved ids.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or UNK.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Maps an extended-space id back to text using this example's OOV list.
    pub fn ext_word<'a>(&'a self, id: usize, oovs: &'a [String]) -> Option<&'a str> {
        if id < self.len() {
            self.word(id)
        } else {
            oovs.get(id - self.len()).map(String::as_str)
        }
    }

    /// Writes "word count" lines in rank order, reserved ids excluded.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (word, count) in self.words.iter().zip(&self.counts).skip(RESERVED.len()) {
            writeln!(w, "{word} {count}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads the top `cap - 4` words of a "word count" file.
    pub fn load(path: impl AsRef<Path>, cap: usize) -> Result<Self> {
        check_cap(cap)?;
        let reader = BufReader::new(File::open(path)?);
        let mut ranked = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(word), Some(count), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::InvalidArgument(format!(
                    "vocab line {}: expected \"word count\", got {line:?}",
                    lineno + 1
                )));
            };
            let count = count.parse::<u64>().map_err(|e| {
                Error::InvalidArgument(format!("vocab line {}: bad count: {e}", lineno + 1))
            })?;
            ranked.push((word.to_string(), count));
            if ranked.len() + RESERVED.len() >= cap {
                break;
            }
        }
        Ok(Self::from_ranked(ranked, cap))
    }
}

fn check_cap(cap: usize) -> Result<()> {
    if cap < RESERVED.len() + 1 {
        return Err(Error::InvalidArgument(format!("vocabulary cap must be at least 5, got {cap}")));
    }
    Ok(())
}

/// Keeps the `cap - 4` most frequent words; equal counts rank by first
/// appearance.
pub fn build_vocab<I, S, W>(corpus: I, cap: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = W>,
    W: AsRef<str>,
{
    check_cap(cap)?;
    let mut counts: HashMap<String, (u64, usize)> = HashMap::new();
    let mut seen = 0usize;
    for seq in corpus {
        for w in seq {
            let w = w.as_ref();
            if RESERVED.contains(&w) {
                continue;
            }
            let order = counts.len();
            counts.entry(w.to_string()).or_insert((0, order)).0 += 1;
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut ranked: Vec<(String, u64, usize)> =
        counts.into_iter().map(|(w, (c, first))| (w, c, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    Ok(Vocabulary::from_ranked(ranked.into_iter().map(|(w, c, _)| (w, c)), cap))
}
