use super::corpus::RawExample;
use super::vocab::{Vocabulary, START, STOP, UNK};
use crate::error::{Error, Result};

/// One article/abstract pair encoded against a fixed vocabulary, with the
/// article's out-of-vocabulary words given temporary ids `vocab.len() + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Truncated article tokens.
    pub article: Vec<String>,
    /// Reference sentences, untruncated (used for evaluation only).
    pub abstract_sentences: Vec<String>,
    pub article_ids: Vec<usize>,
    pub article_ext_ids: Vec<usize>,
    pub article_oovs: Vec<String>,
    pub dec_input_ids: Vec<usize>,
    pub target_ids: Vec<usize>,
}

impl Example {
    pub fn num_oovs(&self) -> usize {
        self.article_oovs.len()
    }

    pub fn article_len(&self) -> usize {
        self.article_ids.len()
    }

    pub fn dec_len(&self) -> usize {
        self.target_ids.len()
    }

    /// Article tokens recovered from `article_ext_ids`.
    pub fn decode_article(&self, vocab: &Vocabulary) -> Vec<String> {
        self.article_ext_ids
            .iter()
            .map(|&id| vocab.ext_word(id, &self.article_oovs).unwrap_or("[?]").to_string())
            .collect()
    }

    /// Re-truncates to shorter limits, as if encoded with them. OOVs that
    /// only occurred past the new article end stop being pointable.
    pub fn truncated(&self, max_enc: usize, max_dec: usize) -> Result<Example> {
        if max_enc == 0 {
            return Err(Error::EmptySource);
        }
        if max_dec == 0 {
            return Err(Error::InvalidArgument("max_dec must be at least 1".into()));
        }
        let mut ex = self.clone();
        let n = ex.article_len().min(max_enc);
        ex.article.truncate(n);
        ex.article_ids.truncate(n);
        ex.article_ext_ids.truncate(n);
        // The first OOV always gets slot zero, which reveals the vocab size.
        let base = self
            .article_ids
            .iter()
            .zip(&self.article_ext_ids)
            .find(|(&id, &ext)| id == UNK && ext != UNK)
            .map(|(_, &ext)| ext);
        if let Some(base) = base {
            let kept = ex.article_ext_ids.iter().filter(|&&e| e >= base).map(|&e| e - base + 1).max().unwrap_or(0);
            ex.article_oovs.truncate(kept);
            for t in &mut ex.target_ids {
                if *t >= base + kept {
                    *t = UNK;
                }
            }
        }
        ex.dec_input_ids.truncate(max_dec);
        ex.target_ids.truncate(max_dec);
        Ok(ex)
    }

    /// The target abstract tokens (extended space, STOP stripped) as text.
    pub fn target_words(&self, vocab: &Vocabulary) -> Vec<String> {
        self.target_ids
            .iter()
            .filter(|&&id| id != STOP)
            .map(|&id| vocab.ext_word(id, &self.article_oovs).unwrap_or("[?]").to_string())
            .collect()
    }
}

/// Encodes one pair. The article is truncated to `max_enc` tokens before OOV
/// discovery; the decoder input/target pair is truncated to `max_dec` steps.
pub fn encode_example<A, B>(
    article_tokens: &[A],
    abstract_tokens: &[B],
    vocab: &Vocabulary,
    max_enc: usize,
    max_dec: usize,
) -> Result<Example>
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    let article: Vec<String> =
        article_tokens.iter().take(max_enc).map(|t| t.as_ref().to_string()).collect();
    if article.is_empty() {
        return Err(Error::EmptySource);
    }
    if max_dec == 0 {
        return Err(Error::InvalidArgument("max_dec must be at least 1".into()));
    }

    let base = vocab.len();
    let mut article_oovs: Vec<String> = Vec::new();
    let mut article_ids = Vec::with_capacity(article.len());
    let mut article_ext_ids = Vec::with_capacity(article.len());
    for w in &article {
        match vocab.id(w) {
            Some(id) => {
                article_ids.push(id);
                article_ext_ids.push(id);
            }
            None => {
                let k = match article_oovs.iter().position(|o| o == w) {
                    Some(k) => k,
                    None => {
                        article_oovs.push(w.clone());
                        article_oovs.len() - 1
                    }
                };
                article_ids.push(UNK);
                article_ext_ids.push(base + k);
            }
        }
    }

    let mut dec_input_ids = vec![START];
    let mut target_ids = Vec::with_capacity(abstract_tokens.len() + 1);
    for w in abstract_tokens {
        let w = w.as_ref();
        match vocab.id(w) {
            Some(id) => {
                dec_input_ids.push(id);
                target_ids.push(id);
            }
            None => {
                dec_input_ids.push(UNK);
                let ext = article_oovs.iter().position(|o| o == w).map_or(UNK, |k| base + k);
                target_ids.push(ext);
            }
        }
    }
    target_ids.push(STOP);
    // Over-long abstracts lose their STOP, matching the truncated input.
    dec_input_ids.truncate(max_dec);
    target_ids.truncate(max_dec);

    let abstract_sentences = vec![abstract_tokens.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(" ")];
    Ok(Example {
        article,
        abstract_sentences,
        article_ids,
        article_ext_ids,
        article_oovs,
        dec_input_ids,
        target_ids,
    })
}

/// Encodes a corpus line, keeping its sentence boundaries for evaluation.
pub fn encode_raw(raw: &RawExample, vocab: &Vocabulary, max_enc: usize, max_dec: usize) -> Result<Example> {
    let mut ex = encode_example(&raw.article_tokens(), &raw.abstract_tokens(), vocab, max_enc, max_dec)?;
    ex.abstract_sentences = raw.abstract_sentences.clone();
    Ok(ex)
}
