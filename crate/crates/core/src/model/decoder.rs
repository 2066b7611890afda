use super::encoder::StateVars;
use super::graph::Graph;
use super::params::{names, ModelParams};
use super::state::{CoverageState, DecoderState, EncoderOutput, StepOutput};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source-side nodes shared by every decoder step of one example.
pub(crate) struct SourceVars<'s> {
    /// `L x 2h` encoder states.
    pub h: Var,
    /// `L x 2h` encoder features `h * W_h`.
    pub features: Var,
    pub mask: &'s [bool],
    pub ext_ids: &'s [usize],
    /// Length of the extended distribution (`vocab_size + max_oov`).
    pub n_ext: usize,
}

pub(crate) struct AttentionVars {
    pub attn: Var,
    pub scores: Var,
    pub context: Var,
}

pub(crate) struct StepVars {
    pub attn: Var,
    pub scores: Var,
    pub context: Var,
    pub p_gen: Option<Var>,
    pub vocab_dist: Var,
    pub final_dist: Var,
    pub covloss: Option<Var>,
    pub state: StateVars,
    pub coverage: Option<Var>,
}

fn check_coverage<T>(params: &ModelParams, coverage: Option<T>) -> Result<Option<T>> {
    if coverage.is_some() != params.config.use_coverage {
        return Err(Error::InvalidArgument(format!(
            "coverage state {} but model coverage is {}",
            if coverage.is_some() { "given" } else { "missing" },
            if params.config.use_coverage { "on" } else { "off" }
        )));
    }
    Ok(coverage)
}

/// Scores, attention distribution and context for decoder state `s = [cell; hidden]`.
pub(crate) fn attention_graph(g: &mut Graph, src: &SourceVars, s: Var, coverage: Option<Var>) -> Result<AttentionVars> {
    let dec_features = g.affine(s, names::ATTN_W_S, names::ATTN_B);
    let mut feat = g.tape.add(src.features, dec_features);
    if let Some(c) = coverage {
        let w_c = g.p(names::ATTN_W_C);
        let cov_features = g.tape.matmul(c, w_c);
        feat = g.tape.add(feat, cov_features);
    }
    let act = g.tape.tanh(feat);
    let v = g.p(names::ATTN_V);
    let scores = g.tape.matmul(act, v);
    let attn = g.tape.masked_softmax(scores, src.mask)?;
    let context = g.tape.matmul_t(attn, src.h, true, false);
    Ok(AttentionVars { attn, scores, context })
}

/// `p_gen * P_vocab` (zero-padded to the extended length) plus
/// `(1 - p_gen) * attention` scattered onto each position's extended id.
pub(crate) fn mix_graph(tape: &mut Tape, p_gen: Var, vocab_dist: Var, attn: Var, ext_ids: &[usize], n_ext: usize) -> Var {
    let vocab = tape.value(vocab_dist).rows();
    let mut generated = tape.mul(p_gen, vocab_dist);
    if n_ext > vocab {
        let pad = tape.constant(Tensor::zeros(&[n_ext - vocab, 1]));
        generated = tape.concat(&[generated, pad], 0);
    }
    let copy_mass = tape.scatter_add(attn, ext_ids, n_ext);
    let copy_weight = tape.one_minus(p_gen);
    let copied = tape.mul(copy_weight, copy_mass);
    tape.add(generated, copied)
}

/// Coverage loss `sum_i min(a_i, c_i)` and the updated coverage `c + a`.
pub(crate) fn coverage_graph(tape: &mut Tape, attn: Var, coverage: Var) -> (Var, Var) {
    let overlap = tape.min(attn, coverage);
    let covloss = tape.sum(overlap);
    let next = tape.add(coverage, attn);
    (covloss, next)
}

pub(crate) fn step_graph(
    g: &mut Graph,
    src: &SourceVars,
    prev_word: usize,
    prev_context: Var,
    state: StateVars,
    coverage: Option<Var>,
) -> Result<StepVars> {
    let cfg = g.params.config.clone();
    if prev_word >= cfg.vocab_size {
        return Err(Error::ExtendedDecoderInput { id: prev_word, vocab_size: cfg.vocab_size });
    }
    let coverage = check_coverage(g.params, coverage)?;

    let emb = g.p(names::EMBEDDING);
    let word = g.tape.gather(emb, &[prev_word]);
    let feed = g.tape.concat(&[word, prev_context], 1);
    let x = g.affine(feed, names::INPUT_FEED_W, names::INPUT_FEED_B);

    let state = super::encoder::lstm_step(g, "decoder", x, state);
    let s = state.concat(g);
    let att = attention_graph(g, src, s, coverage)?;

    let readout = g.tape.concat(&[state.hidden, att.context], 1);
    let hid = g.affine(readout, names::OUT_W, names::OUT_B);
    let proj_w = g.p(names::PROJ_W);
    let proj_b = g.p(names::PROJ_B);
    let logits = g.tape.matmul_t(proj_w, hid, true, true);
    let logits = g.tape.add(logits, proj_b);
    let vocab_dist = g.tape.masked_softmax(logits, &vec![true; cfg.vocab_size])?;

    let (p_gen, final_dist) = if cfg.use_pointer {
        let terms = [
            (att.context, names::PTR_W_CONTEXT),
            (s, names::PTR_W_STATE),
            (x, names::PTR_W_INPUT),
        ];
        let mut parts: Vec<Var> = terms
            .iter()
            .map(|&(input, w)| {
                let w = g.p(w);
                g.tape.matmul(input, w)
            })
            .collect();
        parts.push(g.p(names::PTR_B));
        let pre = g.tape.add_all(&parts);
        let p_gen = g.tape.sigmoid(pre);
        let dist = mix_graph(&mut g.tape, p_gen, vocab_dist, att.attn, src.ext_ids, src.n_ext);
        (Some(p_gen), dist)
    } else {
        (None, vocab_dist)
    };

    let (covloss, coverage) = match coverage {
        Some(c) => {
            let (loss, next) = coverage_graph(&mut g.tape, att.attn, c);
            (Some(loss), Some(next))
        }
        None => (None, None),
    };

    Ok(StepVars {
        attn: att.attn,
        scores: att.scores,
        context: att.context,
        p_gen,
        vocab_dist,
        final_dist,
        covloss,
        state,
        coverage,
    })
}

fn bind_source<'s>(
    g: &mut Graph,
    enc: &EncoderOutput,
    mask: &'s [bool],
    ext_ids: &'s [usize],
    max_oov: usize,
) -> Result<SourceVars<'s>> {
    let l = enc.len();
    if mask.len() != l || ext_ids.len() != l {
        return Err(Error::Shape(format!(
            "{l} encoder rows, {} mask entries, {} extended ids",
            mask.len(),
            ext_ids.len()
        )));
    }
    let n_ext = if g.params.config.use_pointer { g.params.config.vocab_size + max_oov } else { g.params.config.vocab_size };
    if g.params.config.use_pointer {
        if let Some(&bad) = ext_ids.iter().zip(mask).filter(|(_, &m)| m).map(|(id, _)| id).find(|&&id| id >= n_ext) {
            return Err(Error::InvalidArgument(format!("extended id {bad} beyond {n_ext} slots")));
        }
    }
    Ok(SourceVars {
        h: g.constant(enc.h.clone()),
        features: g.constant(enc.features.clone()),
        mask,
        ext_ids,
        n_ext,
    })
}

fn bind_state(g: &mut Graph, state: &DecoderState) -> StateVars {
    StateVars { cell: g.constant(state.cell.clone()), hidden: g.constant(state.hidden.clone()) }
}

/// Attention read-out for one decoder state.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub attn: Vec<f64>,
    pub scores: Vec<f64>,
    pub context: Tensor,
}

/// Attention over encoder states for decoder state `[cell; hidden]`, with
/// the coverage term when the model has one.
pub fn attention(
    params: &ModelParams,
    dec_state: &DecoderState,
    encoder: &EncoderOutput,
    enc_mask: &[bool],
    coverage: Option<&CoverageState>,
) -> Result<AttentionOutput> {
    let mut g = Graph::new(params);
    let ext_ids = vec![0; encoder.len()];
    let src = bind_source(&mut g, encoder, enc_mask, &ext_ids, 0)?;
    let state = bind_state(&mut g, dec_state);
    let s = state.concat(&mut g);
    let coverage = check_coverage(params, coverage)?.map(|c| g.constant(c.c.clone()));
    let att = attention_graph(&mut g, &src, s, coverage)?;
    Ok(AttentionOutput {
        attn: g.value(att.attn).data().to_vec(),
        scores: g.value(att.scores).data().to_vec(),
        context: g.value(att.context).clone(),
    })
}

/// One decoder timestep. `prev_word_id` must be in-vocabulary; callers map
/// extended ids to UNK first. `prev_context` is zero on the first step.
#[allow(clippy::too_many_arguments)]
pub fn decoder_step(
    params: &ModelParams,
    prev_word_id: usize,
    prev_context: &Tensor,
    dec_state: &DecoderState,
    encoder: &EncoderOutput,
    enc_mask: &[bool],
    ext_ids: &[usize],
    max_oov: usize,
    coverage: Option<&CoverageState>,
) -> Result<StepOutput> {
    let mut g = Graph::new(params);
    let src = bind_source(&mut g, encoder, enc_mask, ext_ids, max_oov)?;
    let state = bind_state(&mut g, dec_state);
    let ctx = g.constant(prev_context.clone());
    let coverage = coverage.map(|c| g.constant(c.c.clone()));
    let out = step_graph(&mut g, &src, prev_word_id, ctx, state, coverage)?;
    let val = |v: Var| g.value(v).clone();
    Ok(StepOutput {
        attn: val(out.attn).into_vec(),
        scores: val(out.scores).into_vec(),
        context: val(out.context),
        p_gen: out.p_gen.map(|p| g.value(p).item()),
        vocab_dist: val(out.vocab_dist).into_vec(),
        final_dist: val(out.final_dist).into_vec(),
        covloss: out.covloss.map(|c| g.value(c).item()),
        new_state: DecoderState { cell: val(out.state.cell), hidden: val(out.state.hidden) },
        new_coverage: out.coverage.map(|c| CoverageState { c: val(c) }),
    })
}

/// The distribution over all `ext_size` extended-vocabulary ids for a given
/// switch value, attention and vocabulary distribution.
pub fn final_distribution(p_gen: f64, vocab_dist: &[f64], attn: &[f64], ext_ids: &[usize], ext_size: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::scalar(p_gen));
    let v = tape.constant(Tensor::column(vocab_dist.to_vec()));
    let a = tape.constant(Tensor::column(attn.to_vec()));
    let out = mix_graph(&mut tape, p, v, a, ext_ids, ext_size);
    tape.value(out).data().to_vec()
}

/// Coverage loss for attention `attn` against coverage `c`, and `c + attn`.
pub fn coverage_step(attn: &[f64], coverage: &CoverageState) -> (f64, CoverageState) {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::column(attn.to_vec()));
    let c = tape.constant(coverage.c.clone());
    let (loss, next) = coverage_graph(&mut tape, a, c);
    (tape.value(loss).item(), CoverageState { c: tape.value(next).clone() })
}
