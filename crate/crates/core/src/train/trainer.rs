use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adagrad::adagrad_step;
use super::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::grad::clip_by_global_norm;
use crate::model::{loss_and_grads, sequence_loss, ModelParams};
use crate::text::{make_batches, Batch, Example};

/// From global step `step` on, train on examples truncated to these lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub step: u64,
    pub max_enc: usize,
    pub max_dec: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub init_accumulator: f64,
    pub max_grad_norm: f64,
    /// Coverage loss weight; ignored without coverage.
    pub lambda: f64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub patience: usize,
    pub seed: u64,
    /// Optimizer steps to run per call to [`train`].
    pub max_steps: u64,
    pub curriculum: Vec<CurriculumStage>,
    /// Stop once the mean training loss over the last `stop_window` steps
    /// drops below this.
    pub stop_below: Option<f64>,
    pub stop_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.15,
            init_accumulator: 0.1,
            max_grad_norm: 2.0,
            lambda: 1.0,
            batch_size: 16,
            eval_every: 100,
            patience: 5,
            seed: 0,
            max_steps: 10_000,
            curriculum: Vec::new(),
            stop_below: None,
            stop_window: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("init_accumulator", self.init_accumulator),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 || self.stop_window == 0 {
            return bad("batch_size, eval_every, patience and stop_window must be at least 1".into());
        }
        if self.curriculum.iter().any(|s| s.max_enc == 0 || s.max_dec == 0) {
            return bad("curriculum lengths must be at least 1".into());
        }
        Ok(())
    }

    fn stage_at(&self, step: u64) -> Option<&CurriculumStage> {
        self.curriculum.iter().filter(|s| s.step <= step).max_by_key(|s| s.step)
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub nll: f64,
    pub covloss: Option<f64>,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub pgen_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub valid_loss: f64,
    pub improved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStopping,
    TargetLoss,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Snapshot at the best validation loss seen during this call.
    pub best: Option<Checkpoint>,
    pub log: Vec<LogRow>,
    pub evals: Vec<EvalRecord>,
    pub stop: StopReason,
}

impl TrainOutcome {
    /// The best snapshot if validation ran, else the final state.
    pub fn best_or_last(&self) -> &Checkpoint {
        self.best.as_ref().unwrap_or(&self.last)
    }
}

/// Append-only CSV sink for [`LogRow`]s.
pub struct CsvLog {
    writer: csv::Writer<File>,
}

impl CsvLog {
    pub const HEADER: [&'static str; 6] = ["step", "loss", "nll", "covloss", "grad_norm", "pgen_mean"];

    /// Truncates `path` and writes the header.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        writer.write_record(Self::HEADER)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    /// Appends to an existing log, writing the header only if it is empty.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if empty {
            writer.write_record(Self::HEADER)?;
        }
        Ok(Self { writer })
    }

    pub fn record(&mut self, row: &LogRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<File> {
        let mut f = self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        f.flush()?;
        Ok(f)
    }
}

/// Mean per-example loss over `examples`, batched in order.
pub fn validation_loss(params: &ModelParams, examples: &[Example], batch_size: usize, lambda: f64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let batches: Vec<Batch> = examples
        .chunks(batch_size.max(1))
        .enumerate()
        .map(|(c, chunk)| Batch::from_examples(chunk.iter().enumerate().map(|(i, e)| (c * batch_size + i, e))))
        .collect();
    let losses = batches
        .par_iter()
        .map(|b| sequence_loss(params, b, lambda).map(|r| r.loss * b.len() as f64))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / examples.len() as f64)
}

/// The batch taken at global step `step`: epoch `e` visits every example once
/// in the order given by shuffle seed `seed + e`, so a resumed run sees the
/// same sequence as an uninterrupted one.
fn batch_for_step(examples: &[Example], config: &TrainConfig, step: u64, cache: &mut Option<(u64, Vec<Batch>)>) -> Result<Batch> {
    let per_epoch = examples.len().div_ceil(config.batch_size) as u64;
    let epoch = step / per_epoch;
    if cache.as_ref().map(|(e, _)| *e) != Some(epoch) {
        *cache = Some((epoch, make_batches(examples, config.batch_size, config.seed.wrapping_add(epoch))?));
    }
    let batch = &cache.as_ref().expect("filled above").1[(step % per_epoch) as usize];
    match config.stage_at(step) {
        None => Ok(batch.clone()),
        Some(stage) => {
            let members = batch
                .indices
                .iter()
                .map(|&i| examples[i].truncated(stage.max_enc, stage.max_dec).map(|e| (i, e)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Batch::from_examples(members.iter().map(|(i, e)| (*i, e))))
        }
    }
}

/// Runs up to `config.max_steps` Adagrad steps from `start`.
///
/// Each step: batch loss and gradients, global-norm clipping, Adagrad update,
/// then a log row passed to `on_step`. With a non-empty `valid` set the
/// validation loss is computed every `eval_every` global steps; training
/// stops after `patience` evaluations in a row without improvement.
pub fn train<F>(start: Checkpoint, examples: &[Example], valid: &[Example], config: &TrainConfig, mut on_step: F) -> Result<TrainOutcome>
where
    F: FnMut(&LogRow) -> Result<()>,
{
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("empty training corpus".into()));
    }
    let mut ck = start;
    let n_params = ck.params.tensors.len();
    if ck.optimizer.accumulators.len() != n_params {
        return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
    }
    ck.meta.train = config.clone();

    let mut log = Vec::new();
    let mut evals = Vec::new();
    let mut best = None;
    let mut recent = std::collections::VecDeque::with_capacity(config.stop_window);
    let mut cache = None;
    let mut stop = StopReason::MaxSteps;

    for _ in 0..config.max_steps {
        let step = ck.meta.step;
        let batch = batch_for_step(examples, config, step, &mut cache)?;
        let (report, grads) = loss_and_grads(&ck.params, &batch, config.lambda)?;
        if !report.loss.is_finite() || !grads.all_finite() {
            return Err(Error::NonFinite(format!(
                "loss {} at step {} on batch of examples {:?}",
                report.loss, step, batch.indices
            )));
        }
        let (clipped, grad_norm) = clip_by_global_norm(&grads, config.max_grad_norm)?;
        adagrad_step(&mut ck.params.tensors, &clipped, &mut ck.optimizer, config.learning_rate)?;
        ck.meta.step += 1;

        let row = LogRow {
            step: ck.meta.step,
            loss: report.loss,
            nll: report.nll,
            covloss: ck.params.config.use_coverage.then_some(report.covloss),
            grad_norm,
            pgen_mean: report.pgen_mean,
        };
        on_step(&row)?;
        if recent.len() == config.stop_window {
            recent.pop_front();
        }
        recent.push_back(row.loss);
        log.push(row);

        if !valid.is_empty() && ck.meta.step.is_multiple_of(config.eval_every) {
            let valid_loss = validation_loss(&ck.params, valid, config.batch_size, config.lambda)?;
            let improved = ck.meta.best_valid_loss.is_none_or(|b| valid_loss < b);
            if improved {
                ck.meta.best_valid_loss = Some(valid_loss);
                ck.meta.evals_since_best = 0;
                best = Some(ck.clone());
            } else {
                ck.meta.evals_since_best += 1;
            }
            evals.push(EvalRecord { step: ck.meta.step, valid_loss, improved });
            if ck.meta.evals_since_best >= config.patience {
                stop = StopReason::EarlyStopping;
                break;
            }
        }
        if let Some(target) = config.stop_below {
            if recent.len() == config.stop_window && recent.iter().sum::<f64>() / (recent.len() as f64) < target {
                stop = StopReason::TargetLoss;
                break;
            }
        }
    }
    Ok(TrainOutcome { last: ck, best, log, evals, stop })
}
