use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rouge::{lead3, rouge_l, rouge_l_plain, rouge_n, RougeScore};
use super::stats::{novelty_stats, repetition_stats, NoveltyReport, PgenStats, RepetitionReport, MAX_N};
use crate::decode::{split_sentences, DecodedRecord};
use crate::error::Result;
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeSet {
    pub rouge_1: RougeScore,
    pub rouge_2: RougeScore,
    pub rouge_l: RougeScore,
}

impl RougeSet {
    pub fn score<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T], plain_lcs: bool) -> Self {
        let ct: Vec<&str> = candidate.iter().flat_map(|s| s.as_ref().split_whitespace()).collect();
        let rt: Vec<&str> = reference.iter().flat_map(|s| s.as_ref().split_whitespace()).collect();
        Self {
            rouge_1: rouge_n(&ct, &rt, 1),
            rouge_2: rouge_n(&ct, &rt, 2),
            rouge_l: if plain_lcs { rouge_l_plain(candidate, reference) } else { rouge_l(candidate, reference) },
        }
    }

    /// Arithmetic mean of each field, accumulated in slice order.
    pub fn mean(all: &[RougeSet]) -> Self {
        let n = all.len().max(1) as f64;
        let avg = |f: fn(&RougeSet) -> RougeScore| {
            let (p, r, f1) = all.iter().map(f).fold((0.0, 0.0, 0.0), |(p, r, f1), s| {
                (p + s.precision, r + s.recall, f1 + s.f1)
            });
            RougeScore { precision: p / n, recall: r / n, f1: f1 / n }
        };
        Self { rouge_1: avg(|s| s.rouge_1), rouge_2: avg(|s| s.rouge_2), rouge_l: avg(|s| s.rouge_l) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub model: RougeSet,
    pub lead3: RougeSet,
    pub repetition: RepetitionReport,
    pub reference_repetition: RepetitionReport,
    pub novelty: NoveltyReport,
    pub reference_novelty: NoveltyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub plain_lcs: bool,
    /// Mean per-example scores of the decoded summaries.
    pub rouge: RougeSet,
    pub lead3: RougeSet,
    /// Counts pooled over the corpus.
    pub repetition: RepetitionReport,
    pub reference_repetition: RepetitionReport,
    pub novelty: NoveltyReport,
    pub reference_novelty: NoveltyReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pgen: Option<PgenStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub per_example: Vec<ExampleScores>,
}

pub fn score_example(record: &DecodedRecord, plain_lcs: bool) -> ExampleScores {
    let article = tokenize(&record.article);
    let lead = split_sentences(&lead3(&split_sentences(&article)));
    ExampleScores {
        model: RougeSet::score(&record.decoded, &record.reference, plain_lcs),
        lead3: RougeSet::score(&lead, &record.reference, plain_lcs),
        repetition: repetition_stats(&record.decoded),
        reference_repetition: repetition_stats(&record.reference),
        novelty: novelty_stats(&record.decoded, &article),
        reference_novelty: novelty_stats(&record.reference, &article),
    }
}

/// Scores every record in parallel and reduces in input order.
pub fn evaluate(records: &[DecodedRecord], plain_lcs: bool, pgen: Option<PgenStats>) -> EvalReport {
    let per_example: Vec<ExampleScores> = records.par_iter().map(|r| score_example(r, plain_lcs)).collect();
    let model: Vec<RougeSet> = per_example.iter().map(|e| e.model).collect();
    let lead: Vec<RougeSet> = per_example.iter().map(|e| e.lead3).collect();
    let mut report = EvalReport {
        examples: records.len(),
        plain_lcs,
        rouge: RougeSet::mean(&model),
        lead3: RougeSet::mean(&lead),
        repetition: RepetitionReport::default(),
        reference_repetition: RepetitionReport::default(),
        novelty: NoveltyReport::default(),
        reference_novelty: NoveltyReport::default(),
        pgen,
        config: None,
        per_example: Vec::new(),
    };
    for e in &per_example {
        report.repetition.add(&e.repetition);
        report.reference_repetition.add(&e.reference_repetition);
        report.novelty.add(&e.novelty);
        report.reference_novelty.add(&e.reference_novelty);
    }
    report.per_example = per_example;
    report
}

fn axis_label(n: usize) -> String {
    if n > MAX_N {
        "sentences".into()
    } else {
        format!("{n}-grams")
    }
}

/// Percent duplicates by n-gram size, model vs reference.
pub fn write_repetition_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit", "model_pct_duplicate", "reference_pct_duplicate"])?;
    for n in 1..=MAX_N + 1 {
        let (m, r) = if n > MAX_N {
            (report.repetition.sentence_fraction(), report.reference_repetition.sentence_fraction())
        } else {
            (report.repetition.ngram_fraction(n), report.reference_repetition.ngram_fraction(n))
        };
        w.write_record([axis_label(n), (100.0 * m).to_string(), (100.0 * r).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Percent novel by n-gram size, model vs reference; the sentence row is the
/// share of sentences not copied verbatim.
pub fn write_novelty_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit", "model_pct_novel", "reference_pct_novel"])?;
    for n in 1..=MAX_N + 1 {
        let (m, r) = if n > MAX_N {
            (1.0 - report.novelty.copy_rate(), 1.0 - report.reference_novelty.copy_rate())
        } else {
            (report.novelty.novel_fraction(n), report.reference_novelty.novel_fraction(n))
        };
        w.write_record([axis_label(n), (100.0 * m).to_string(), (100.0 * r).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
