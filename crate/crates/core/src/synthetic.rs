//! Deterministic synthetic corpora for exercising copying, templated
//! generation and repetition.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{build_vocab, RawExample, Vocabulary, RESERVED};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// The abstract is the article's content words, in order.
    CopyTask,
    /// "X beat Y SCORE on DAY ." from a reworded match report.
    TemplateSummary,
    /// Salient sentences differing only in their object, among filler
    /// sentences.
    RepetitionTrap,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [Self::CopyTask, Self::TemplateSummary, Self::RepetitionTrap];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CopyTask => "copy-task",
            Self::TemplateSummary => "template-summary",
            Self::RepetitionTrap => "repetition-trap",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic kind {s:?} (copy-task, template-summary, repetition-trap)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub count: usize,
    pub seed: u64,
    /// Distinct in-vocabulary content words the generator draws from.
    pub vocab_size: usize,
    /// Probability that a content word is replaced by a fresh OOV word.
    pub oov_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { kind: SyntheticKind::CopyTask, count: 200, seed: 0, vocab_size: 40, oov_rate: 0.0 }
    }
}

const FILLERS: [&str; 6] = ["the", "a", "of", "and", "in", "to"];
const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const MAX_GOALS: usize = 5;
const TRAP_SENTENCES: usize = 4;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("synthetic count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.oov_rate) {
            return Err(Error::Config(format!("oov_rate must be in [0, 1], got {}", self.oov_rate)));
        }
        let need = match self.kind {
            SyntheticKind::CopyTask => 5,
            SyntheticKind::TemplateSummary => 2,
            SyntheticKind::RepetitionTrap => 3 + 2 * TRAP_SENTENCES,
        };
        if self.vocab_size < need {
            return Err(Error::Config(format!("{} needs vocab_size >= {need}", self.kind)));
        }
        Ok(())
    }

    fn content_words(&self) -> Vec<String> {
        match self.kind {
            SyntheticKind::CopyTask => (0..self.vocab_size).map(|i| format!("w{i}")).collect(),
            SyntheticKind::TemplateSummary => (0..self.vocab_size).map(|i| format!("team{i}")).collect(),
            SyntheticKind::RepetitionTrap => {
                let third = self.vocab_size / 3;
                let subjects = (0..third).map(|i| format!("s{i}"));
                let verbs = (0..third).map(|i| format!("v{i}"));
                let objects = (0..self.vocab_size - 2 * third).map(|i| format!("o{i}"));
                subjects.chain(verbs).chain(objects).collect()
            }
        }
    }

    /// Every in-vocabulary word the generator can emit; OOV words are never
    /// among them.
    pub fn vocab_words(&self) -> Vec<String> {
        let mut words: Vec<String> = FILLERS.iter().map(|s| s.to_string()).collect();
        words.push(".".into());
        if self.kind == SyntheticKind::TemplateSummary {
            words.extend(["beat", "on", ",", "played", "at", "home", "with", "score"].map(String::from));
            words.extend(DAYS.map(String::from));
            for a in 0..=MAX_GOALS {
                for b in 0..=MAX_GOALS {
                    words.push(format!("{a}-{b}"));
                }
            }
        }
        words.extend(self.content_words());
        words
    }

    /// The vocabulary covering exactly [`Self::vocab_words`].
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let words = self.vocab_words();
        let cap = words.len() + RESERVED.len();
        build_vocab(std::iter::once(words.iter()), cap)
    }
}

struct Gen {
    rng: ChaCha8Rng,
    oov_rate: f64,
    used_oovs: HashSet<String>,
}

impl Gen {
    fn fresh_oov(&mut self) -> String {
        loop {
            let tail: String = (0..6).map(|_| self.rng.gen_range(b'a'..=b'z') as char).collect();
            let w = format!("x{tail}");
            if self.used_oovs.insert(w.clone()) {
                return w;
            }
        }
    }

    fn maybe_oov(&mut self, word: &str) -> String {
        if self.rng.gen_bool(self.oov_rate) {
            self.fresh_oov()
        } else {
            word.to_string()
        }
    }

    fn filler(&mut self) -> &'static str {
        FILLERS[self.rng.gen_range(0..FILLERS.len())]
    }

    fn filler_sentence(&mut self) -> Vec<String> {
        let n = self.rng.gen_range(3..=5);
        let mut s: Vec<String> = (0..n).map(|_| self.filler().to_string()).collect();
        s.push(".".into());
        s
    }
}

/// Generates `spec.count` pairs; identical specs give identical corpora.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Vec<RawExample>> {
    spec.validate()?;
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(spec.seed), oov_rate: spec.oov_rate, used_oovs: HashSet::new() };
    let content = spec.content_words();
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        out.push(match spec.kind {
            SyntheticKind::CopyTask => copy_task(&mut g, &content),
            SyntheticKind::TemplateSummary => template(&mut g, &content),
            SyntheticKind::RepetitionTrap => repetition_trap(&mut g, spec.vocab_size, &content),
        });
    }
    Ok(out)
}

fn copy_task(g: &mut Gen, content: &[String]) -> RawExample {
    let k = g.rng.gen_range(3..=5);
    let picked: Vec<String> = content.choose_multiple(&mut g.rng, k).cloned().collect();
    let picked: Vec<String> = picked.iter().map(|w| g.maybe_oov(w)).collect();
    let mut article = Vec::new();
    for w in &picked {
        for _ in 0..g.rng.gen_range(0..=2) {
            article.push(g.filler().to_string());
        }
        article.push(w.clone());
    }
    for _ in 0..g.rng.gen_range(0..=2) {
        article.push(g.filler().to_string());
    }
    article.push(".".into());
    RawExample { article: article.join(" "), abstract_sentences: vec![format!("{} .", picked.join(" "))] }
}

fn template(g: &mut Gen, teams: &[String]) -> RawExample {
    let pair: Vec<String> = teams.choose_multiple(&mut g.rng, 2).cloned().collect();
    let (x, y) = (g.maybe_oov(&pair[0]), g.maybe_oov(&pair[1]));
    let score = format!("{}-{}", g.rng.gen_range(1..=MAX_GOALS), g.rng.gen_range(0..=MAX_GOALS));
    let day = DAYS[g.rng.gen_range(0..DAYS.len())];
    let mut article = g.filler_sentence();
    article.extend(format!("on {day} , {x} played {y} at home with score {score} .").split(' ').map(String::from));
    article.extend(g.filler_sentence());
    RawExample {
        article: article.join(" "),
        abstract_sentences: vec![format!("{x} beat {y} {score} on {day} .")],
    }
}

fn repetition_trap(g: &mut Gen, vocab_size: usize, content: &[String]) -> RawExample {
    let third = vocab_size / 3;
    let (subjects, rest) = content.split_at(third);
    let (verbs, objects) = rest.split_at(third);
    let pick = g.rng.gen_range(0..subjects.len());
    let subject = g.maybe_oov(&subjects[pick]);
    let verb = verbs[g.rng.gen_range(0..verbs.len())].clone();
    let k = TRAP_SENTENCES.min(objects.len());
    let os: Vec<String> = objects.choose_multiple(&mut g.rng, k).cloned().collect();
    let salient: Vec<String> = os.iter().map(|o| format!("{subject} {verb} {o} .")).collect();

    let mut article = Vec::new();
    for s in &salient {
        if g.rng.gen_bool(0.5) {
            article.extend(g.filler_sentence());
        }
        article.extend(s.split(' ').map(String::from));
    }
    article.extend(g.filler_sentence());
    RawExample { article: article.join(" "), abstract_sentences: salient }
}
