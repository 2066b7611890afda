#![allow(dead_code)]

use covgen::model::{decoder_step, encode, CoverageState, Mode, ModelConfig, ModelParams, StepOutput};
use covgen::text::{build_vocab, encode_example, Batch, Example, Vocabulary};
use covgen::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Five corpus words plus the four reserved ids: vocabulary size 9.
pub fn tiny_vocab() -> Vocabulary {
    build_vocab(vec!["a b c d e".split_whitespace()], 9).unwrap()
}

pub fn tiny_config(mode: Mode) -> ModelConfig {
    ModelConfig { hidden_dim: 4, emb_dim: 3, vocab_size: 9, max_enc: 400, max_dec: 100, ..Default::default() }
        .with_mode(mode)
}

/// Source of length 5 with one OOV ("zz") that the one-word abstract points
/// at: two decoder steps (the word, then STOP).
pub fn tiny_example(vocab: &Vocabulary) -> Example {
    encode_example(&["a", "zz", "b", "a", "c"], &["zz"], vocab, 400, 100).unwrap()
}

/// Parameters drawn uniformly from `[-scale, scale]`, biases included, so
/// every nonlinearity is exercised away from the origin.
pub fn random_params(config: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let mut p = ModelParams::init(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (_, t) in p.tensors.iter_mut() {
        for x in t.data_mut() {
            *x = rng.gen_range(-scale..=scale);
        }
    }
    p
}

pub fn single_batch(ex: &Example) -> Batch {
    Batch::from_examples([(0, ex)])
}

/// Teacher-forced decoder steps over `ex`, threading state, context and
/// coverage the way training does.
pub fn rollout(params: &ModelParams, ex: &Example) -> Vec<StepOutput> {
    let mask = vec![true; ex.article_len()];
    let enc = encode(params, &ex.article_ids, &mask).unwrap();
    let mut state = enc.init_state.clone();
    let mut context = Tensor::zeros(&[1, params.config.attn_dim()]);
    let mut coverage = params.config.use_coverage.then(|| CoverageState::zeros(ex.article_len()));
    let mut out = Vec::new();
    for &prev in &ex.dec_input_ids {
        let step = decoder_step(
            params,
            prev,
            &context,
            &state,
            &enc,
            &mask,
            &ex.article_ext_ids,
            ex.num_oovs(),
            coverage.as_ref(),
        )
        .unwrap();
        state = step.new_state.clone();
        context = step.context.clone();
        coverage = step.new_coverage.clone();
        out.push(step);
    }
    out
}

/// A random article over `a..e` plus OOVs `p..t`, with an abstract mixing
/// in-vocabulary words, article OOVs and OOVs the article lacks.
pub fn random_example(vocab: &Vocabulary, seed: u64) -> Example {
    let words = ["a", "b", "c", "d", "e", "p", "q", "r", "s", "t", "."];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let article: Vec<&str> = (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect();
    let m = rng.gen_range(0..=4);
    let abs: Vec<&str> = (0..m)
        .map(|_| if rng.gen_bool(0.2) { "zz" } else { words[rng.gen_range(0..words.len())] })
        .collect();
    encode_example(&article, &abs, vocab, 400, 100).unwrap()
}
