mod common;

use covgen::model::{final_distribution, names, sequence_loss, Mode, ModelParams, StepOutput};
use covgen::text::{encode_example, Batch, Example, Vocabulary, UNK};
use covgen::ParamSet;
use proptest::prelude::*;

use common::*;

/// Independent mixture: `p * P_vocab(w) + (1 - p) * sum of attention on
/// positions holding w`.
fn brute_mixture(step: &StepOutput, ex: &Example, v: usize) -> Vec<f64> {
    let p = step.p_gen.unwrap();
    (0..v + ex.num_oovs())
        .map(|w| {
            let gen = if w < v { p * step.vocab_dist[w] } else { 0.0 };
            let copy: f64 =
                ex.article_ext_ids.iter().zip(&step.attn).filter(|(&id, _)| id == w).map(|(_, a)| a).sum();
            gen + (1.0 - p) * copy
        })
        .collect()
}

fn draw(mode: Mode, seed: u64, scale: f64) -> (ModelParams, Example, Vocabulary) {
    let vocab = tiny_vocab();
    let params = random_params(&tiny_config(mode), seed, scale);
    let ex = random_example(&vocab, seed.wrapping_mul(31).wrapping_add(5));
    (params, ex, vocab)
}

/// Baseline weights: the pointer model's tensors minus the switch.
fn strip_pointer(params: &ModelParams) -> ModelParams {
    let mut tensors = ParamSet::new();
    for (name, t) in params.tensors.iter() {
        if !name.starts_with("pointer.") {
            tensors.insert(name, t.clone());
        }
    }
    ModelParams::from_tensors(params.config.clone().with_mode(Mode::Baseline), tensors).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn final_dist_is_normalized_in_every_mode(seed in any::<u64>(), scale in 0.05..1.5f64) {
        for mode in Mode::ALL {
            let (params, ex, vocab) = draw(mode, seed, scale);
            let ext = if mode.use_pointer() { ex.num_oovs() } else { 0 };
            for step in rollout(&params, &ex) {
                prop_assert_eq!(step.final_dist.len(), vocab.len() + ext);
                prop_assert!((step.final_dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(step.final_dist.iter().all(|&p| p >= 0.0));
                prop_assert!((step.attn.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert_eq!(step.p_gen.is_some(), mode.use_pointer());
            }
        }
    }

    #[test]
    fn final_dist_matches_brute_force_mixture(seed in any::<u64>(), scale in 0.05..1.5f64) {
        let (params, ex, vocab) = draw(Mode::Pointer, seed, scale);
        for step in rollout(&params, &ex) {
            let want = brute_mixture(&step, &ex, vocab.len());
            for (w, (got, want)) in step.final_dist.iter().zip(&want).enumerate() {
                prop_assert!((got - want).abs() < 1e-12, "slot {}: {} vs {}", w, got, want);
            }
            // Words absent from the source get no copy mass; extended slots no
            // generation mass.
            let gen_only = final_distribution(1.0, &step.vocab_dist, &step.attn, &ex.article_ext_ids, vocab.len() + ex.num_oovs());
            prop_assert!(gen_only[vocab.len()..].iter().all(|&p| p == 0.0));
            let copy_only = final_distribution(0.0, &step.vocab_dist, &step.attn, &ex.article_ext_ids, vocab.len() + ex.num_oovs());
            for (w, p) in copy_only.iter().enumerate() {
                if !ex.article_ext_ids.contains(&w) {
                    prop_assert_eq!(*p, 0.0);
                }
            }
        }
    }

    #[test]
    fn coverage_accounting(seed in any::<u64>(), scale in 0.05..1.5f64) {
        let (params, ex, _) = draw(Mode::Coverage, seed, scale);
        let steps = rollout(&params, &ex);
        let mut c = vec![0.0; ex.article_len()];
        for (t, step) in steps.iter().enumerate() {
            let cov = step.covloss.unwrap();
            let brute: f64 = step.attn.iter().zip(&c).map(|(a, c)| a.min(*c)).sum();
            prop_assert!((cov - brute).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 4.0 * f64::EPSILON).contains(&cov));
            if t == 0 {
                prop_assert_eq!(cov, 0.0);
            }
            for (ci, a) in c.iter_mut().zip(&step.attn) {
                *ci += a;
            }
            let total = step.new_coverage.as_ref().unwrap().total();
            prop_assert!((total - (t + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_w_c_leaves_attention_bit_identical(seed in any::<u64>(), scale in 0.05..1.5f64) {
        let (pointer, ex, _) = draw(Mode::Pointer, seed, scale);
        let coverage = pointer.with_coverage().unwrap();
        prop_assert!(coverage.get(names::ATTN_W_C).data().iter().all(|&w| w == 0.0));
        let a = rollout(&pointer, &ex);
        let b = rollout(&coverage, &ex);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.attn, &y.attn);
            prop_assert_eq!(&x.context, &y.context);
            prop_assert_eq!(&x.final_dist, &y.final_dist);
        }
    }

    #[test]
    fn encoding_round_trips_and_truncates_as_a_prefix(
        article in prop::collection::vec(0usize..12, 1..20),
        abs in prop::collection::vec(0usize..14, 0..8),
        k in 1usize..25,
        d in 1usize..10,
    ) {
        let words = ["a", "b", "c", "d", "e", "p", "q", "r", "s", "t", ".", "u", "zz", "yy"];
        let vocab = tiny_vocab();
        let art: Vec<&str> = article.iter().map(|&i| words[i]).collect();
        let abs: Vec<&str> = abs.iter().map(|&i| words[i]).collect();
        let full = encode_example(&art, &abs, &vocab, 400, 100).unwrap();
        let cut = encode_example(&art, &abs, &vocab, k, d).unwrap();
        let n = art.len().min(k);

        prop_assert_eq!(cut.decode_article(&vocab), art[..n].to_vec());
        let mut seen: Vec<&str> = Vec::new();
        for w in art[..n].iter().filter(|w| vocab.id(w).is_none()) {
            if !seen.contains(w) {
                seen.push(w);
            }
        }
        prop_assert_eq!(&cut.article_oovs, &seen);
        prop_assert_eq!(&cut.article_ids[..], &full.article_ids[..n]);
        prop_assert_eq!(cut, full.truncated(k, d).unwrap());

        let pointable = abs.iter().filter(|w| vocab.id(w).is_none() && art.contains(w)).count();
        prop_assert_eq!(full.target_ids.iter().filter(|&&t| t >= vocab.len()).count(), pointable);
        prop_assert!(full.target_ids.iter().all(|&t| t < vocab.len() + full.num_oovs()));
        prop_assert!(full.dec_input_ids.iter().all(|&t| t < vocab.len()));
    }
}

#[test]
fn pinned_switch_reduces_to_baseline_nll() {
    let vocab = tiny_vocab();
    let mut pointer = random_params(&tiny_config(Mode::Pointer), 4, 0.5);
    pointer.get_mut(names::PTR_B).data_mut()[0] = 1e3;
    let baseline = strip_pointer(&pointer);
    let ex = encode_example(&["a", "zz", "b", "c", "a"], &["c", "a", "b"], &vocab, 400, 100).unwrap();
    let batch = Batch::from_examples([(0, &ex)]);
    let p = sequence_loss(&pointer, &batch, 1.0).unwrap();
    let b = sequence_loss(&baseline, &batch, 1.0).unwrap();
    assert_eq!(p.pgen_mean, Some(1.0));
    for (x, y) in p.step_nll[0].iter().zip(&b.step_nll[0]) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn zero_lambda_coverage_loss_equals_pointer_loss() {
    let vocab = tiny_vocab();
    let pointer = random_params(&tiny_config(Mode::Pointer), 6, 0.5);
    let coverage = pointer.with_coverage().unwrap();
    let ex = tiny_example(&vocab);
    let batch = Batch::from_examples([(0, &ex)]);
    let p = sequence_loss(&pointer, &batch, 1.0).unwrap();
    let c = sequence_loss(&coverage, &batch, 0.0).unwrap();
    assert_eq!(p.loss, c.loss);
    assert!(c.covloss >= 0.0);
}

#[test]
fn perfect_and_uniform_predictions() {
    let vocab = tiny_vocab();
    let ex = encode_example(&["a", "b"], &["c", "d"], &vocab, 400, 100).unwrap();
    let batch = Batch::from_examples([(0, &ex)]);
    let cfg = tiny_config(Mode::Baseline);
    // Zero weights make every vocabulary distribution uniform over 9 ids.
    let mut zero = ModelParams::init(&cfg, 0).unwrap();
    for (_, t) in zero.tensors.iter_mut() {
        t.data_mut().fill(0.0);
    }
    let r = sequence_loss(&zero, &batch, 1.0).unwrap();
    assert!((r.nll - 9f64.ln()).abs() < 1e-12);

    // A huge output bias on one id drives its probability to 1.
    let one = encode_example(&["a"], &[] as &[&str], &vocab, 400, 100).unwrap();
    zero.get_mut(names::PROJ_B).data_mut()[covgen::text::STOP] = 1e3;
    let r = sequence_loss(&zero, &Batch::from_examples([(0, &one)]), 1.0).unwrap();
    assert_eq!(r.nll, 0.0);
}

#[test]
fn baseline_scores_unpointable_targets_as_unk() {
    let vocab = tiny_vocab();
    let ex = tiny_example(&vocab);
    assert!(ex.target_ids[0] >= vocab.len());
    let mut as_unk = ex.clone();
    as_unk.target_ids[0] = UNK;
    let params = random_params(&tiny_config(Mode::Baseline), 2, 0.5);
    let a = sequence_loss(&params, &Batch::from_examples([(0, &ex)]), 1.0).unwrap();
    let b = sequence_loss(&params, &Batch::from_examples([(0, &as_unk)]), 1.0).unwrap();
    assert_eq!(a.loss, b.loss);
}
