use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1 }
    }

    fn from_hits(hits: usize, candidate_len: usize, reference_len: usize) -> Self {
        if candidate_len == 0 || reference_len == 0 {
            return Self::default();
        }
        Self::from_pr(hits as f64 / candidate_len as f64, hits as f64 / reference_len as f64)
    }
}

pub(crate) fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N with clipped n-gram counts. `n = 0` or an empty side scores zero.
pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T], n: usize) -> RougeScore {
    if n == 0 || candidate.len() < n || reference.len() < n {
        return RougeScore::default();
    }
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let hits: usize = cand.iter().map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_hits(hits, candidate.len() + 1 - n, reference.len() + 1 - n)
}

/// Positions in `a` that belong to one longest common subsequence with `b`.
fn lcs_positions(a: &[&str], b: &[&str]) -> Vec<usize> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 1..=n {
        for j in 1..=m {
            dp[at(i, j)] = if a[i - 1] == b[j - 1] {
                dp[at(i - 1, j - 1)] + 1
            } else {
                dp[at(i - 1, j)].max(dp[at(i, j - 1)])
            };
        }
    }
    let (mut i, mut j) = (n, m);
    let mut out = Vec::with_capacity(dp[at(n, m)]);
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if dp[at(i - 1, j)] >= dp[at(i, j - 1)] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out.reverse();
    out
}

pub fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
    lcs_positions(&a, &b).len()
}

fn sentence_tokens<S: AsRef<str>>(sentences: &[S]) -> Vec<Vec<&str>> {
    sentences
        .iter()
        .map(|s| s.as_ref().split_whitespace().collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Summary-level ROUGE-L. Each reference sentence is matched against every
/// candidate sentence; the union of matched reference positions counts as
/// hits, with each word credited no more often than it occurs on either side.
pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> RougeScore {
    let cand = sentence_tokens(candidate);
    let refs = sentence_tokens(reference);
    let cand_len: usize = cand.iter().map(Vec::len).sum();
    let ref_len: usize = refs.iter().map(Vec::len).sum();
    if cand_len == 0 || ref_len == 0 {
        return RougeScore::default();
    }
    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    for w in cand.iter().flatten() {
        *cand_left.entry(w).or_insert(0) += 1;
    }
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for w in refs.iter().flatten() {
        *ref_left.entry(w).or_insert(0) += 1;
    }
    let mut hits = 0;
    for r in &refs {
        let mut union = vec![false; r.len()];
        for c in &cand {
            for i in lcs_positions(r, c) {
                union[i] = true;
            }
        }
        for (i, _) in union.iter().enumerate().filter(|(_, &u)| u) {
            let w = r[i];
            let (cl, rl) = (cand_left.get_mut(w).expect("matched"), ref_left.get_mut(w).expect("own word"));
            if *cl > 0 && *rl > 0 {
                *cl -= 1;
                *rl -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::from_hits(hits, cand_len, ref_len)
}

/// ROUGE-L from one LCS over the concatenated token streams.
pub fn rouge_l_plain<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> RougeScore {
    let cand: Vec<&str> = sentence_tokens(candidate).into_iter().flatten().collect();
    let refs: Vec<&str> = sentence_tokens(reference).into_iter().flatten().collect();
    RougeScore::from_hits(lcs_positions(&cand, &refs).len(), cand.len(), refs.len())
}

/// First three sentences, as one token stream.
pub fn lead3<S: AsRef<str>>(article_sentences: &[S]) -> Vec<String> {
    article_sentences
        .iter()
        .take(3)
        .flat_map(|s| s.as_ref().split_whitespace().map(str::to_string))
        .collect()
}
