use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{decoder_step, encode, CoverageState, DecoderState, ModelParams};
use crate::tensor::Tensor;
use crate::text::{Example, Vocabulary, START, STOP, UNK};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_steps: usize,
    /// A hypothesis may only finish once it has this many tokens before STOP.
    pub min_steps: usize,
    /// Rank finished hypotheses by mean rather than total log probability.
    pub length_norm: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam_size: 4, max_steps: 120, min_steps: 0, length_norm: true }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_steps == 0 {
            return Err(Error::Config("beam_size and max_steps must be at least 1".into()));
        }
        if self.min_steps > self.max_steps {
            return Err(Error::Config(format!(
                "min_steps {} exceeds max_steps {}",
                self.min_steps, self.max_steps
            )));
        }
        Ok(())
    }
}

/// What the decoder saw when it emitted one token.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub attn: Vec<f64>,
    pub p_gen: Option<f64>,
}

/// A partial or finished output sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Extended-space ids, starting with START.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: DecoderState,
    pub context: Tensor,
    pub coverage: Option<CoverageState>,
    /// One record per emitted token.
    pub records: Vec<StepRecord>,
}

impl Hypothesis {
    pub fn last(&self) -> usize {
        *self.tokens.last().expect("starts with START")
    }

    /// Tokens after START, including a final STOP if there is one.
    pub fn emitted(&self) -> &[usize] {
        &self.tokens[1..]
    }

    pub fn is_finished(&self) -> bool {
        self.last() == STOP && self.tokens.len() > 1
    }

    pub fn score(&self, length_norm: bool) -> f64 {
        if length_norm {
            self.log_prob / self.emitted().len().max(1) as f64
        } else {
            self.log_prob
        }
    }

    fn extend(&self, token: usize, p: f64, state: DecoderState, context: Tensor, coverage: Option<CoverageState>, rec: StepRecord) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        let mut records = self.records.clone();
        records.push(rec);
        Self { tokens, log_prob: self.log_prob + p.ln(), state, context, coverage, records }
    }
}

/// The winning hypothesis and its text.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub best: Hypothesis,
    /// Output words with STOP stripped; extended ids spelled with the
    /// example's OOV words.
    pub words: Vec<String>,
    /// False when no hypothesis emitted STOP within `max_steps`.
    pub finished: bool,
}

/// Indices of the `k` largest entries, larger first, ties to the lower index.
fn top_k(dist: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    let k = k.min(idx.len());
    let cmp = |&a: &usize, &b: &usize| dist[b].total_cmp(&dist[a]).then(a.cmp(&b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Beam search over the extended vocabulary.
///
/// Each live hypothesis proposes its `2 * beam_size` most probable next
/// tokens; the best `beam_size` non-STOP extensions survive. A STOP ranked
/// within the step's top `beam_size` candidates, after at least `min_steps`
/// tokens, moves the hypothesis to the finished pool. Search ends when
/// `beam_size` hypotheses have finished or after `max_steps`.
pub fn beam_search(params: &ModelParams, example: &Example, vocab: &Vocabulary, config: &DecodeConfig) -> Result<Decoded> {
    config.validate()?;
    let vsize = params.config.vocab_size;
    if vocab.len() != vsize {
        return Err(Error::Config(format!(
            "vocabulary has {} ids but the model expects {vsize}",
            vocab.len()
        )));
    }
    if example.article_ids.is_empty() {
        return Err(Error::EmptySource);
    }
    let mask = vec![true; example.article_len()];
    let enc = encode(params, &example.article_ids, &mask)?;
    let cfg = &params.config;
    let start = Hypothesis {
        tokens: vec![START],
        log_prob: 0.0,
        state: enc.init_state.clone(),
        context: Tensor::zeros(&[1, cfg.attn_dim()]),
        coverage: cfg.use_coverage.then(|| CoverageState::zeros(example.article_len())),
        records: Vec::new(),
    };

    let mut live = vec![start];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let fanout = 2 * config.beam_size;
    for step in 0..config.max_steps {
        if finished.len() >= config.beam_size {
            break;
        }
        let mut candidates = Vec::with_capacity(live.len() * fanout);
        for h in &live {
            let prev = if h.last() >= vsize { UNK } else { h.last() };
            let out = decoder_step(
                params,
                prev,
                &h.context,
                &h.state,
                &enc,
                &mask,
                &example.article_ext_ids,
                example.num_oovs(),
                h.coverage.as_ref(),
            )?;
            for id in top_k(&out.final_dist, fanout) {
                let rec = StepRecord { attn: out.attn.clone(), p_gen: out.p_gen };
                candidates.push(h.extend(
                    id,
                    out.final_dist[id],
                    out.new_state.clone(),
                    out.context.clone(),
                    out.new_coverage.clone(),
                    rec,
                ));
            }
        }
        // Stable sort keeps parent order, then candidate rank, on ties.
        candidates.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
        live.clear();
        for (rank, c) in candidates.into_iter().enumerate() {
            if c.last() == STOP {
                // Only a STOP that would have made the beam may finish.
                if rank < config.beam_size && step >= config.min_steps {
                    finished.push(c);
                }
            } else if live.len() < config.beam_size {
                live.push(c);
            }
            if live.len() == config.beam_size && rank + 1 >= config.beam_size {
                break;
            }
        }
        if live.is_empty() {
            break;
        }
    }

    let done = !finished.is_empty();
    let pool = if done { finished } else { live };
    let best = pool
        .into_iter()
        .reduce(|best, h| if h.score(config.length_norm) > best.score(config.length_norm) { h } else { best })
        .ok_or_else(|| Error::InvalidArgument("beam search produced no hypotheses".into()))?;
    let words = ids_to_words(best.emitted(), vocab, &example.article_oovs)?;
    Ok(Decoded { best, words, finished: done })
}

/// Spells extended-space ids, dropping STOP.
pub fn ids_to_words(ids: &[usize], vocab: &Vocabulary, oovs: &[String]) -> Result<Vec<String>> {
    ids.iter()
        .filter(|&&id| id != STOP)
        .map(|&id| {
            vocab
                .ext_word(id, oovs)
                .map(str::to_string)
                .ok_or_else(|| Error::InvalidArgument(format!("id {id} is outside the extended vocabulary")))
        })
        .collect()
}
