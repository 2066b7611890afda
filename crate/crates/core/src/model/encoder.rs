use super::graph::Graph;
use super::params::{names, ModelParams, GATES};
use super::state::{DecoderState, EncoderOutput};
use crate::autodiff::Var;
use crate::error::{Error, Result};

/// `(cell, hidden)` row vectors on a tape.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub cell: Var,
    pub hidden: Var,
}

impl StateVars {
    /// `[cell; hidden]` as one row.
    pub fn concat(&self, g: &mut Graph) -> Var {
        g.tape.concat(&[self.cell, self.hidden], 1)
    }
}

/// One LSTM step with gate weights `{prefix}.w_{i,f,o,g}` acting on `[x; h]`.
pub(crate) fn lstm_step(g: &mut Graph, prefix: &str, x: Var, state: StateVars) -> StateVars {
    let z = g.tape.concat(&[x, state.hidden], 1);
    let mut pre = [z; 4];
    for (slot, gate) in pre.iter_mut().zip(GATES) {
        *slot = g.affine(z, &format!("{prefix}.w_{gate}"), &format!("{prefix}.b_{gate}"));
    }
    let i = g.tape.sigmoid(pre[0]);
    let f = g.tape.sigmoid(pre[1]);
    let o = g.tape.sigmoid(pre[2]);
    let cand = g.tape.tanh(pre[3]);
    let keep = g.tape.mul(f, state.cell);
    let write = g.tape.mul(i, cand);
    let cell = g.tape.add(keep, write);
    let squashed = g.tape.tanh(cell);
    let hidden = g.tape.mul(o, squashed);
    StateVars { cell, hidden }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    /// `L x 2h`; padded rows are zero.
    pub h: Var,
    pub init_state: StateVars,
}

/// Number of real tokens, requiring the mask to be a non-empty prefix.
pub(crate) fn unmasked_len(mask: &[bool]) -> Result<usize> {
    let n = mask.iter().take_while(|&&m| m).count();
    if n == 0 {
        return Err(Error::InvalidArgument("encoder input is fully masked".into()));
    }
    if mask[n..].iter().any(|&m| m) {
        return Err(Error::InvalidArgument("encoder mask must be a prefix of real tokens".into()));
    }
    Ok(n)
}

/// Bidirectional LSTM over the unmasked prefix. Padded positions yield zero
/// rows, and the backward direction starts at the last real token.
pub(crate) fn encode_graph(g: &mut Graph, ids: &[usize], mask: &[bool]) -> Result<EncoderVars> {
    if ids.len() != mask.len() {
        return Err(Error::Shape(format!("{} ids with {} mask entries", ids.len(), mask.len())));
    }
    let n = unmasked_len(mask)?;
    let cfg = &g.params.config;
    let (h, vocab) = (cfg.hidden_dim, cfg.vocab_size);
    if let Some(&bad) = ids[..n].iter().find(|&&id| id >= vocab) {
        return Err(Error::InvalidArgument(format!("encoder id {bad} outside vocabulary of {vocab}")));
    }

    let emb = g.p(names::EMBEDDING);
    let inputs: Vec<Var> = ids[..n].iter().map(|&id| g.tape.gather(emb, &[id])).collect();
    let zero = StateVars { cell: g.zeros(1, h), hidden: g.zeros(1, h) };

    let mut fw = Vec::with_capacity(n);
    let mut state = zero;
    for &x in &inputs {
        state = lstm_step(g, "encoder.fw", x, state);
        fw.push(state.hidden);
    }
    let fw_final = state;

    let mut bw = vec![fw[0]; n];
    let mut state = zero;
    for i in (0..n).rev() {
        state = lstm_step(g, "encoder.bw", inputs[i], state);
        bw[i] = state.hidden;
    }
    let bw_final = state;

    let mut rows: Vec<Var> = (0..n).map(|i| g.tape.concat(&[fw[i], bw[i]], 1)).collect();
    if ids.len() > n {
        rows.push(g.zeros(ids.len() - n, 2 * h));
    }
    let hs = g.tape.concat(&rows, 0);

    let cells = g.tape.concat(&[fw_final.cell, bw_final.cell], 1);
    let hiddens = g.tape.concat(&[fw_final.hidden, bw_final.hidden], 1);
    let c = g.affine(cells, names::REDUCE_W_C, names::REDUCE_B_C);
    let hh = g.affine(hiddens, names::REDUCE_W_H, names::REDUCE_B_H);
    let init_state = StateVars { cell: g.tape.relu(c), hidden: g.tape.relu(hh) };
    Ok(EncoderVars { h: hs, init_state })
}

/// Encodes one (possibly padded) article.
pub fn encode(params: &ModelParams, article_ids: &[usize], enc_mask: &[bool]) -> Result<EncoderOutput> {
    let mut g = Graph::new(params);
    let enc = encode_graph(&mut g, article_ids, enc_mask)?;
    let w_h = g.p(names::ATTN_W_H);
    let features = g.tape.matmul(enc.h, w_h);
    Ok(EncoderOutput {
        h: g.value(enc.h).clone(),
        features: g.value(features).clone(),
        init_state: DecoderState {
            cell: g.value(enc.init_state.cell).clone(),
            hidden: g.value(enc.init_state.hidden).clone(),
        },
    })
}
