use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use covgen::config::RunConfig;
use covgen::decode::{decode_all, decoded_record, inspect_decode, read_records, write_records, DecodedRecord, InspectRecord};
use covgen::eval::{evaluate, pgen_stats, write_novelty_csv, write_repetition_csv};
use covgen::grad_check;
use covgen::model::{count_params, loss_fn, Mode, ModelConfig, ModelParams};
use covgen::synthetic::{gen_synthetic, SyntheticSpec};
use covgen::text::{build_vocab, encode_example, encode_raw, read_jsonl, write_jsonl, Batch, Example, Vocabulary};
use covgen::train::{enable_coverage, train, Checkpoint, CsvLog};
use rayon::prelude::*;
use serde_json::json;

use crate::{Command, ConfigArgs};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { cfg, train, valid, vocab, checkpoint_dir, init_checkpoint, steps, seed } => {
            let mut rc = resolve(&cfg)?.0;
            set_path(&mut rc.paths.train, train);
            set_path(&mut rc.paths.valid, valid);
            set_path(&mut rc.paths.vocab, vocab);
            set_path(&mut rc.paths.checkpoint_dir, checkpoint_dir);
            set_path(&mut rc.paths.init_checkpoint, init_checkpoint);
            if let Some(s) = steps {
                rc.train.max_steps = s;
            }
            if let Some(s) = seed {
                rc.train.seed = s;
            }
            cmd_train(rc)
        }
        Command::Decode { cfg, checkpoint, test, vocab, out, beam_size } => {
            let (mut rc, explicit) = resolve(&cfg)?;
            set_path(&mut rc.paths.test, test);
            set_path(&mut rc.paths.vocab, vocab);
            if let Some(b) = beam_size {
                rc.decode.beam_size = b;
            }
            cmd_decode(rc, explicit, &checkpoint, &out)
        }
        Command::Inspect { cfg, checkpoint, test, vocab, out, limit } => {
            let (mut rc, explicit) = resolve(&cfg)?;
            set_path(&mut rc.paths.test, test);
            set_path(&mut rc.paths.vocab, vocab);
            cmd_inspect(rc, explicit, &checkpoint, &out, limit)
        }
        Command::Evaluate { decoded, inspect, out, plot_dir, plain_lcs } => {
            cmd_evaluate(&decoded, inspect.as_deref(), &out, plot_dir.as_deref(), plain_lcs)
        }
        Command::CountParams { cfg, json } => cmd_count(resolve(&cfg)?.0, json),
        Command::Gradcheck { mode, hidden_dim, emb_dim, seed, tolerance, epsilon } => {
            cmd_gradcheck(mode, hidden_dim, emb_dim, seed, tolerance, epsilon)
        }
        Command::GenSynthetic { kind, count, seed, vocab_size, oov_rate, out, vocab_out } => {
            let spec = SyntheticSpec { kind, count, seed, vocab_size, oov_rate };
            let corpus = gen_synthetic(&spec)?;
            write_jsonl(&out, &corpus)?;
            if let Some(v) = vocab_out {
                spec.vocabulary()?.save(&v)?;
            }
            println!("wrote {} {} pairs to {}", corpus.len(), spec.kind, out.display());
            Ok(())
        }
        Command::BuildVocab { corpus, cap, out } => {
            let mut docs = Vec::new();
            for p in &corpus {
                for raw in read_jsonl(p)? {
                    docs.push(raw.article_tokens());
                    docs.push(raw.abstract_tokens());
                }
            }
            let vocab = build_vocab(&docs, cap)?;
            vocab.save(&out)?;
            println!("wrote {} ids ({} words) to {}", vocab.len(), vocab.len() - 4, out.display());
            Ok(())
        }
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

/// Config file, then `--set`, then `--mode`. The flag reports whether the
/// user said anything about the model itself.
fn resolve(args: &ConfigArgs) -> Result<(RunConfig, bool)> {
    let mut rc = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    rc.apply_overrides(&args.overrides)?;
    if let Some(m) = args.mode {
        rc.mode = m;
    }
    let explicit = args.config.is_some()
        || args.mode.is_some()
        || args.overrides.iter().any(|o| o.starts_with("model.") || o.starts_with("mode="));
    Ok((rc, explicit))
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("missing {key} (flag or config key paths.{key})"))
}

fn load_corpus(path: &Path, vocab: &Vocabulary, model: &ModelConfig) -> Result<Vec<Example>> {
    let raw = read_jsonl(path)?;
    if raw.is_empty() {
        bail!("{} has no examples", path.display());
    }
    raw.iter()
        .enumerate()
        .map(|(i, r)| {
            encode_raw(r, vocab, model.max_enc, model.max_dec)
                .with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

fn cmd_train(mut rc: RunConfig) -> Result<()> {
    rc.validate()?;
    let vocab_path = require(&rc.paths.vocab, "vocab")?.to_path_buf();
    let vocab = Vocabulary::load(&vocab_path, rc.model.vocab_size)?;
    rc.model.vocab_size = vocab.len();
    let model = rc.model_config();
    let examples = load_corpus(require(&rc.paths.train, "train")?, &vocab, &model)?;
    let valid = match &rc.paths.valid {
        Some(p) => load_corpus(p, &vocab, &model)?,
        None => Vec::new(),
    };
    let dir = require(&rc.paths.checkpoint_dir, "checkpoint_dir")?.to_path_buf();
    fs::create_dir_all(&dir)?;

    let (mut start, resumed) = match &rc.paths.init_checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            if rc.mode == Mode::Coverage && ck.meta.mode == Mode::Pointer {
                ck.check_config(&model.clone().with_mode(Mode::Pointer))?;
                (enable_coverage(&ck)?, false)
            } else {
                ck.check_config(&model)?;
                (ck, true)
            }
        }
        None => (Checkpoint::fresh(ModelParams::init(&model, rc.init_seed)?, &rc.train), false),
    };
    start.meta.config_echo = Some(rc.echo());
    rc.save(dir.join("run_config.json"))?;

    let log_path = dir.join("train_log.csv");
    let mut log = if resumed { CsvLog::append(&log_path)? } else { CsvLog::create(&log_path)? };
    let from = start.meta.step;
    let outcome = train(start, &examples, &valid, &rc.train, |row| log.record(row))?;
    log.into_inner()?;

    outcome.last.save(dir.join("last.ckpt"))?;
    if let Some(best) = &outcome.best {
        best.save(dir.join("best.ckpt"))?;
    }
    let summary = json!({
        "stop": outcome.stop,
        "steps": outcome.last.meta.step - from,
        "final_step": outcome.last.meta.step,
        "final_loss": outcome.log.last().map(|r| r.loss),
        "best_valid_loss": outcome.last.meta.best_valid_loss,
        "evals": outcome.evals,
        "config": rc.echo(),
    });
    fs::write(dir.join("train_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} mode: ran {} steps (stop: {:?}), final loss {:.6}, checkpoint {}",
        outcome.last.meta.mode,
        outcome.last.meta.step - from,
        outcome.stop,
        outcome.log.last().map_or(f64::NAN, |r| r.loss),
        dir.join("last.ckpt").display()
    );
    Ok(())
}

/// Loads the checkpoint and the matching vocabulary and test set.
fn decode_inputs(rc: &RunConfig, explicit: bool, checkpoint: &Path) -> Result<(Checkpoint, Vocabulary, Vec<Example>)> {
    rc.decode.validate()?;
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let vocab = Vocabulary::load(require(&rc.paths.vocab, "vocab")?, ck.params.config.vocab_size)?;
    if vocab.len() != ck.params.config.vocab_size {
        bail!(
            "vocabulary has {} ids but the checkpoint expects {}",
            vocab.len(),
            ck.params.config.vocab_size
        );
    }
    if explicit {
        let mut m = rc.model_config();
        m.vocab_size = vocab.len();
        ck.check_config(&m)?;
    }
    let examples = load_corpus(require(&rc.paths.test, "test")?, &vocab, &ck.params.config)?;
    Ok((ck, vocab, examples))
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn write_echo(out: &Path, rc: &RunConfig, ck: &Checkpoint) -> Result<()> {
    let echo = json!({
        "run": rc.echo(),
        "checkpoint_step": ck.meta.step,
        "checkpoint_mode": ck.meta.mode,
        "model": ck.params.config,
        "training": ck.meta.config_echo,
    });
    fs::write(sidecar(out), serde_json::to_string_pretty(&echo)?)?;
    Ok(())
}

fn cmd_decode(rc: RunConfig, explicit: bool, checkpoint: &Path, out: &Path) -> Result<()> {
    let (ck, vocab, examples) = decode_inputs(&rc, explicit, checkpoint)?;
    let decoded = decode_all(&ck.params, &examples, &vocab, &rc.decode)?;
    let records: Vec<DecodedRecord> = examples.iter().zip(&decoded).map(|(e, d)| decoded_record(e, d)).collect();
    write_records(out, &records)?;
    write_echo(out, &rc, &ck)?;
    let unfinished = decoded.iter().filter(|d| !d.finished).count();
    println!("decoded {} examples to {} ({unfinished} hit max_steps)", records.len(), out.display());
    Ok(())
}

fn cmd_inspect(rc: RunConfig, explicit: bool, checkpoint: &Path, out: &Path, limit: Option<usize>) -> Result<()> {
    let (ck, vocab, mut examples) = decode_inputs(&rc, explicit, checkpoint)?;
    if let Some(n) = limit {
        examples.truncate(n);
    }
    let dumps = examples
        .par_iter()
        .map(|e| inspect_decode(&ck.params, e, &vocab, &rc.decode))
        .collect::<covgen::Result<Vec<InspectRecord>>>()?;
    write_records(out, &dumps)?;
    write_echo(out, &rc, &ck)?;
    println!("wrote {} inspection records to {}", dumps.len(), out.display());
    Ok(())
}

fn cmd_evaluate(decoded: &Path, inspect: Option<&Path>, out: &Path, plot_dir: Option<&Path>, plain_lcs: bool) -> Result<()> {
    let records: Vec<DecodedRecord> = read_records(decoded).with_context(|| format!("reading {}", decoded.display()))?;
    if records.is_empty() {
        bail!("{} has no records", decoded.display());
    }
    let pgen = match inspect {
        Some(p) => {
            let dumps: Vec<InspectRecord> = read_records(p).with_context(|| format!("reading {}", p.display()))?;
            Some(pgen_stats(&dumps)?)
        }
        None => None,
    };
    let mut report = evaluate(&records, plain_lcs, pgen);
    let decode_echo = fs::read_to_string(sidecar(decoded))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok());
    report.config = Some(json!({
        "decoded": decoded,
        "inspect": inspect,
        "plain_lcs": plain_lcs,
        "decode": decode_echo,
    }));
    fs::write(out, serde_json::to_string_pretty(&report)?)?;
    if let Some(dir) = plot_dir {
        fs::create_dir_all(dir)?;
        write_repetition_csv(&report, dir.join("repetition.csv"))?;
        write_novelty_csv(&report, dir.join("novelty.csv"))?;
    }
    let r = &report.rouge;
    println!(
        "{} examples: ROUGE-1 {:.2}  ROUGE-2 {:.2}  ROUGE-L {:.2}  (lead-3 {:.2} / {:.2} / {:.2})",
        report.examples,
        100.0 * r.rouge_1.f1,
        100.0 * r.rouge_2.f1,
        100.0 * r.rouge_l.f1,
        100.0 * report.lead3.rouge_1.f1,
        100.0 * report.lead3.rouge_2.f1,
        100.0 * report.lead3.rouge_l.f1,
    );
    println!(
        "duplicate 3-grams {:.2}%  novel 3-grams {:.2}%  sentence copy rate {:.2}%",
        100.0 * report.repetition.ngram_fraction(3),
        100.0 * report.novelty.novel_fraction(3),
        100.0 * report.novelty.copy_rate()
    );
    if let Some(p) = &report.pgen {
        println!("p_gen mean {:.4} over {} steps (min {:.4}, max {:.4})", p.mean, p.steps, p.min, p.max);
    }
    Ok(())
}

fn group_digits(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn cmd_count(rc: RunConfig, as_json: bool) -> Result<()> {
    let model = rc.model_config();
    model.validate()?;
    let count = count_params(&model);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&json!({ "mode": model.mode(), "count": count }))?);
        return Ok(());
    }
    println!("mode {}: {} parameters", model.mode(), group_digits(count.total));
    for (g, n) in &count.groups {
        println!("  {g:<12} {:>12}", group_digits(*n));
    }
    let mut prev = count.total;
    for (m, on) in [(Mode::Pointer, model.use_coverage), (Mode::Baseline, model.use_pointer)] {
        if on {
            let n = count_params(&model.clone().with_mode(m)).total;
            println!("  +{} over {m}", group_digits(prev - n));
            prev = n;
        }
    }
    Ok(())
}

fn cmd_gradcheck(mode: Mode, hidden_dim: usize, emb_dim: usize, seed: u64, tolerance: f64, epsilon: f64) -> Result<()> {
    let vocab = build_vocab(vec!["a b c d e".split_whitespace()], 9)?;
    let model = ModelConfig { hidden_dim, emb_dim, vocab_size: vocab.len(), ..Default::default() }.with_mode(mode);
    // Two decoder steps: an article OOV, then STOP.
    let example = encode_example(&["a", "zz", "b", "a", "c"], &["zz"], &vocab, 400, 100)?;
    let batch = Batch::from_examples([(0, &example)]);
    let mut params = ModelParams::init(&model, seed)?;
    params.tensors = params.tensors.scaled(25.0);
    let report = grad_check(loss_fn(&params, &batch, 1.0), &params.tensors, epsilon)?;
    let verdict = if report.passes(tolerance) { "PASS" } else { "FAIL" };
    println!(
        "{mode}: max relative error {:.3e} over {} coordinates (worst {}[{}]) {verdict} at tolerance {tolerance:e}",
        report.max_rel_error, report.coordinates, report.worst_param, report.worst_index
    );
    if !report.passes(tolerance) {
        bail!("gradient check failed");
    }
    Ok(())
}
