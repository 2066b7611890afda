use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::decode::InspectRecord;
use crate::error::{Error, Result};

/// `hits / total`, kept as counts so corpora can be pooled exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }

    pub fn add(&mut self, other: Ratio) {
        self.hits += other.hits;
        self.total += other.total;
    }
}

pub const MAX_N: usize = 4;

/// Duplicate n-grams (n = 1..=4) and duplicate sentences in one summary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub ngrams: [Ratio; MAX_N],
    pub sentences: Ratio,
}

impl RepetitionReport {
    pub fn ngram_fraction(&self, n: usize) -> f64 {
        self.ngrams[n - 1].value()
    }

    pub fn sentence_fraction(&self) -> f64 {
        self.sentences.value()
    }

    pub fn add(&mut self, other: &RepetitionReport) {
        for (a, b) in self.ngrams.iter_mut().zip(other.ngrams) {
            a.add(b);
        }
        self.sentences.add(other.sentences);
    }
}

/// Novel n-grams (n = 1..=4) and verbatim-copied sentences in one summary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub ngrams: [Ratio; MAX_N],
    pub copied_sentences: Ratio,
}

impl NoveltyReport {
    pub fn novel_fraction(&self, n: usize) -> f64 {
        self.ngrams[n - 1].value()
    }

    pub fn copy_rate(&self) -> f64 {
        self.copied_sentences.value()
    }

    pub fn add(&mut self, other: &NoveltyReport) {
        for (a, b) in self.ngrams.iter_mut().zip(other.ngrams) {
            a.add(b);
        }
        self.copied_sentences.add(other.copied_sentences);
    }
}

fn split<S: AsRef<str>>(sentences: &[S]) -> Vec<Vec<&str>> {
    sentences
        .iter()
        .map(|s| s.as_ref().split_whitespace().collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// n-grams are taken within sentences; an occurrence is a duplicate if the
/// same n-gram appeared anywhere earlier in the summary.
pub fn repetition_stats<S: AsRef<str>>(candidate: &[S]) -> RepetitionReport {
    let sents = split(candidate);
    let mut report = RepetitionReport::default();
    for n in 1..=MAX_N {
        let mut seen: HashSet<&[&str]> = HashSet::new();
        let r = &mut report.ngrams[n - 1];
        for s in &sents {
            for g in s.windows(n) {
                r.total += 1;
                if !seen.insert(g) {
                    r.hits += 1;
                }
            }
        }
    }
    let mut seen = HashSet::new();
    for s in &sents {
        report.sentences.total += 1;
        if !seen.insert(s.as_slice()) {
            report.sentences.hits += 1;
        }
    }
    report
}

/// A summary n-gram is novel unless it occurs contiguously in the article; a
/// sentence is copied if it is a contiguous run of article tokens.
pub fn novelty_stats<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], article: &[T]) -> NoveltyReport {
    let sents = split(candidate);
    let article: Vec<&str> = article.iter().map(AsRef::as_ref).collect();
    let mut report = NoveltyReport::default();
    for n in 1..=MAX_N {
        let source: HashSet<&[&str]> = article.windows(n).collect();
        let r = &mut report.ngrams[n - 1];
        for s in &sents {
            for g in s.windows(n) {
                r.total += 1;
                if !source.contains(g) {
                    r.hits += 1;
                }
            }
        }
    }
    for s in &sents {
        report.copied_sentences.total += 1;
        if article.windows(s.len()).any(|w| w == s.as_slice()) {
            report.copied_sentences.hits += 1;
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgenStats {
    pub steps: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Steps whose previous emitted token is ".".
    pub sentence_initial_steps: usize,
    pub sentence_initial_mean: Option<f64>,
    pub other_steps: usize,
    pub other_mean: Option<f64>,
}

/// Aggregates `p_gen` over every decoded step of every dump. The first step
/// of a summary counts as "other".
pub fn pgen_stats(dumps: &[InspectRecord]) -> Result<PgenStats> {
    let (mut all, mut initial, mut other) = (Vec::new(), Vec::new(), Vec::new());
    for d in dumps {
        let p = d.p_gen.as_ref().ok_or(Error::NoPgen)?;
        if p.len() != d.tokens.len() {
            return Err(Error::InvalidArgument(format!(
                "dump has {} p_gen values for {} tokens",
                p.len(),
                d.tokens.len()
            )));
        }
        for (t, &v) in p.iter().enumerate() {
            all.push(v);
            if t > 0 && d.tokens[t - 1] == "." {
                initial.push(v);
            } else {
                other.push(v);
            }
        }
    }
    if all.is_empty() {
        return Err(Error::NoPgen);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(PgenStats {
        steps: all.len(),
        mean: mean(&all).expect("non-empty"),
        min: all.iter().copied().fold(f64::INFINITY, f64::min),
        max: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sentence_initial_steps: initial.len(),
        sentence_initial_mean: mean(&initial),
        other_steps: other.len(),
        other_mean: mean(&other),
    })
}
