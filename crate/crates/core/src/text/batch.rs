use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::example::Example;
use super::vocab::PAD;
use crate::error::{Error, Result};

/// A padded group of examples. Row `b` of every matrix belongs to
/// `indices[b]`; masks are `true` exactly where a real token exists.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub enc_ids: Vec<Vec<usize>>,
    pub enc_ext_ids: Vec<Vec<usize>>,
    pub enc_mask: Vec<Vec<bool>>,
    pub dec_input: Vec<Vec<usize>>,
    pub dec_target: Vec<Vec<usize>>,
    pub dec_mask: Vec<Vec<bool>>,
    pub article_oovs: Vec<Vec<String>>,
    /// Largest OOV count of any member.
    pub max_oov: usize,
}

impl Batch {
    pub fn from_examples<'a>(members: impl IntoIterator<Item = (usize, &'a Example)>) -> Self {
        let members: Vec<(usize, &Example)> = members.into_iter().collect();
        let enc_len = members.iter().map(|(_, e)| e.article_len()).max().unwrap_or(0);
        let dec_len = members.iter().map(|(_, e)| e.dec_len()).max().unwrap_or(0);
        let pad = |ids: &[usize], n: usize| {
            let mut v = ids.to_vec();
            v.resize(n, PAD);
            v
        };
        let mask = |len: usize, n: usize| (0..n).map(|i| i < len).collect::<Vec<_>>();
        Batch {
            indices: members.iter().map(|(i, _)| *i).collect(),
            enc_ids: members.iter().map(|(_, e)| pad(&e.article_ids, enc_len)).collect(),
            enc_ext_ids: members.iter().map(|(_, e)| pad(&e.article_ext_ids, enc_len)).collect(),
            enc_mask: members.iter().map(|(_, e)| mask(e.article_len(), enc_len)).collect(),
            dec_input: members.iter().map(|(_, e)| pad(&e.dec_input_ids, dec_len)).collect(),
            dec_target: members.iter().map(|(_, e)| pad(&e.target_ids, dec_len)).collect(),
            dec_mask: members.iter().map(|(_, e)| mask(e.dec_len(), dec_len)).collect(),
            article_oovs: members.iter().map(|(_, e)| e.article_oovs.clone()).collect(),
            max_oov: members.iter().map(|(_, e)| e.num_oovs()).max().unwrap_or(0),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Shuffles example order with `shuffle_seed` and groups it into batches of
/// `batch_size`; the last batch may be smaller.
pub fn make_batches(examples: &[Example], batch_size: usize, shuffle_seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch::from_examples(chunk.iter().map(|&i| (i, &examples[i]))))
        .collect())
}
