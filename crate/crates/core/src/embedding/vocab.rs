//! Vocabulary construction and the negative-sampling noise distribution.

use std::collections::HashMap;

use rand::Rng;

use crate::dom::TokenSequence;
use crate::embedding::EmbedError;

/// Token table with dense indices assigned by descending corpus frequency,
/// ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    lookup: HashMap<String, usize>,
    total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub token: String,
    pub count: u64,
}

impl Vocabulary {
    pub(crate) fn from_entries(entries: Vec<VocabEntry>, total_tokens: u64) -> Vocabulary {
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token.clone(), i))
            .collect();
        Vocabulary {
            entries,
            lookup,
            total_tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of the retained token counts.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    pub fn entry(&self, index: usize) -> &VocabEntry {
        &self.entries[index]
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }
}

/// Builds the vocabulary of tokens occurring at least `min_count` times.
pub fn build_vocab(corpus: &[TokenSequence], min_count: usize) -> Result<Vocabulary, EmbedError> {
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for seq in corpus {
        for token in &seq.tokens {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    if kept.is_empty() {
        return Err(EmbedError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let total = kept.iter().map(|&(_, c)| c).sum();
    let entries = kept
        .into_iter()
        .map(|(token, count)| VocabEntry {
            token: token.to_string(),
            count,
        })
        .collect();
    Ok(Vocabulary::from_entries(entries, total))
}

/// Unigram distribution raised to the 3/4 power, sampled by binary search
/// over the cumulative weights.
pub(crate) struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub fn new(vocab: &Vocabulary) -> NoiseTable {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for entry in vocab.entries() {
            acc += (entry.count as f64).powf(0.75);
            cumulative.push(acc);
        }
        NoiseTable { cumulative }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x)
    }
}
