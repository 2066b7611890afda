use serde::Serialize;

use super::decoder::{step_graph, SourceVars};
use super::encoder::encode_graph;
use super::graph::Graph;
use super::params::{names, ModelParams};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::text::{Batch, UNK};

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Scalar loss and per-step diagnostics for one batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossReport {
    /// The objective: NLL, plus `lambda * covloss` in coverage mode.
    pub loss: f64,
    /// Mean negative log-likelihood (per-example step mean, then batch mean).
    pub nll: f64,
    /// Mean coverage loss, averaged like `nll`; zero without coverage.
    pub covloss: f64,
    /// Mean `p_gen` over every decoded step; `None` without the pointer.
    pub pgen_mean: Option<f64>,
    /// `[example][step]` negative log-likelihoods.
    pub step_nll: Vec<Vec<f64>>,
    /// `[example][step]` coverage losses (empty rows without coverage).
    pub step_covloss: Vec<Vec<f64>>,
}

fn build_loss(g: &mut Graph, batch: &Batch, lambda: f64) -> Result<(Var, LossReport)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let cfg = g.params.config.clone();
    let vocab = cfg.vocab_size;
    let n_ext = if cfg.use_pointer { vocab + batch.max_oov } else { vocab };

    let mut report = LossReport::default();
    let mut example_losses = Vec::with_capacity(batch.len());
    let (mut nll_sum, mut cov_sum, mut pgen_sum, mut pgen_n) = (0.0, 0.0, 0.0, 0usize);

    for b in 0..batch.len() {
        let enc = encode_graph(g, &batch.enc_ids[b], &batch.enc_mask[b])?;
        let w_h = g.p(names::ATTN_W_H);
        let features = g.tape.matmul(enc.h, w_h);
        let src = SourceVars {
            h: enc.h,
            features,
            mask: &batch.enc_mask[b],
            ext_ids: &batch.enc_ext_ids[b],
            n_ext,
        };
        let steps = batch.dec_mask[b].iter().take_while(|&&m| m).count();
        if steps == 0 {
            return Err(Error::InvalidArgument(format!("example {} has no decoder steps", batch.indices[b])));
        }

        let mut context = g.zeros(1, cfg.attn_dim());
        let mut state = enc.init_state;
        let mut coverage = cfg.use_coverage.then(|| g.zeros(batch.enc_mask[b].len(), 1));
        let mut terms = Vec::with_capacity(steps);
        let mut nlls = Vec::with_capacity(steps);
        let mut covs = Vec::new();

        for t in 0..steps {
            let out = step_graph(g, &src, batch.dec_input[b][t], context, state, coverage)?;
            let mut target = batch.dec_target[b][t];
            if target >= n_ext {
                target = UNK;
            }
            let p = g.tape.gather(out.final_dist, &[target]);
            let p = g.tape.floor_at(p, LOG_FLOOR);
            let logp = g.tape.log(p);
            let nll = g.tape.neg(logp);
            nlls.push(g.value(nll).item());
            let mut term = nll;
            if let Some(cl) = out.covloss {
                covs.push(g.value(cl).item());
                let weighted = g.tape.scale(cl, lambda);
                term = g.tape.add(term, weighted);
            }
            if let Some(p) = out.p_gen {
                pgen_sum += g.value(p).item();
                pgen_n += 1;
            }
            terms.push(term);
            context = out.context;
            state = out.state;
            coverage = out.coverage;
        }

        let stacked = g.tape.concat(&terms, 0);
        let total = g.tape.sum(stacked);
        example_losses.push(g.tape.scale(total, 1.0 / steps as f64));
        nll_sum += nlls.iter().sum::<f64>() / steps as f64;
        cov_sum += if covs.is_empty() { 0.0 } else { covs.iter().sum::<f64>() / steps as f64 };
        report.step_nll.push(nlls);
        report.step_covloss.push(covs);
    }

    let stacked = g.tape.concat(&example_losses, 0);
    let total = g.tape.sum(stacked);
    let loss = g.tape.scale(total, 1.0 / batch.len() as f64);

    let n = batch.len() as f64;
    report.loss = g.value(loss).item();
    report.nll = nll_sum / n;
    report.covloss = cov_sum / n;
    report.pgen_mean = (pgen_n > 0).then(|| pgen_sum / pgen_n as f64);
    Ok((loss, report))
}

/// Batch loss: per step `-log P(target)` (plus `lambda * covloss` with
/// coverage), averaged over each example's real steps, then over examples.
/// Extended targets are scored as UNK by models without the pointer.
pub fn sequence_loss(params: &ModelParams, batch: &Batch, lambda: f64) -> Result<LossReport> {
    let mut g = Graph::new(params);
    Ok(build_loss(&mut g, batch, lambda)?.1)
}

/// [`sequence_loss`] together with its gradient for every parameter.
pub fn loss_and_grads(params: &ModelParams, batch: &Batch, lambda: f64) -> Result<(LossReport, GradientSet)> {
    let mut g = Graph::new(params);
    let (loss, report) = build_loss(&mut g, batch, lambda)?;
    let grads = g.backprop(loss)?;
    Ok((report, grads))
}

/// Scalar-function view for finite-difference checks: evaluates the loss
/// with `tensors` substituted for the model's weights.
pub fn loss_fn<'a>(
    params: &'a ModelParams,
    batch: &'a Batch,
    lambda: f64,
) -> impl Fn(&crate::grad::ParamSet) -> Result<(f64, GradientSet)> + 'a {
    move |tensors| {
        let probe = ModelParams { config: params.config.clone(), tensors: tensors.clone() };
        let (report, grads) = loss_and_grads(&probe, batch, lambda)?;
        Ok((report.loss, grads))
    }
}
