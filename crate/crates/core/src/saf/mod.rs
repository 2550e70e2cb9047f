//! The trainable state abstraction function: page pairs are mapped to
//! cosine-similarity feature vectors (one score per configured embedding
//! kind) and a classifier labels the pair clone or distinct.

mod classifiers;
mod io;

pub use classifiers::{train_classifier, ClassifierKind, TrainedClassifier};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dom::{extract_tokens, DomTree, EmbeddingKind, TokenSequence};
use crate::embedding::{infer_vector, Doc2VecModel, EmbedError, Embedding};

#[derive(Debug, Error)]
pub enum SafError {
    #[error("embedding kinds differ: {0} vs {1}")]
    KindMismatch(EmbeddingKind, EmbeddingKind),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding type set must not be empty")]
    EmptyTypeSet,
    #[error("unknown embedding kind name: {0:?}")]
    UnknownKind(String),
    #[error("no model configured for kind {0}")]
    MissingModel(EmbeddingKind),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("feature vector does not match the classifier's embedding type set")]
    FeatureMismatch,
    #[error("unknown classifier kind name: {0:?}")]
    UnknownClassifier(String),
    #[error("unsupported classifier bundle version {0}")]
    VersionMismatch(u32),
    #[error("malformed classifier bundle: {0}")]
    Format(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Clone/near-duplicate is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Distinct,
    Clone,
}

impl PairLabel {
    pub fn from_bit(bit: u8) -> Option<PairLabel> {
        match bit {
            0 => Some(PairLabel::Distinct),
            1 => Some(PairLabel::Clone),
            _ => None,
        }
    }

    pub fn as_bit(self) -> u8 {
        match self {
            PairLabel::Distinct => 0,
            PairLabel::Clone => 1,
        }
    }
}

/// Ordered, duplicate-free subset of the three embedding kinds. The order is
/// always the canonical `content < tags < content+tags`, which fixes the
/// feature-vector layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingTypeSet {
    kinds: Vec<EmbeddingKind>,
}

impl EmbeddingTypeSet {
    pub fn new(kinds: impl IntoIterator<Item = EmbeddingKind>) -> Result<Self, SafError> {
        let mut kinds: Vec<EmbeddingKind> = kinds.into_iter().collect();
        kinds.sort();
        kinds.dedup();
        if kinds.is_empty() {
            return Err(SafError::EmptyTypeSet);
        }
        Ok(EmbeddingTypeSet { kinds })
    }

    pub fn single(kind: EmbeddingKind) -> Self {
        EmbeddingTypeSet { kinds: vec![kind] }
    }

    pub fn all() -> Self {
        EmbeddingTypeSet {
            kinds: EmbeddingKind::ALL.to_vec(),
        }
    }

    /// Parses a comma-separated list such as `content,tags` or
    /// `content+tags`.
    pub fn parse(s: &str) -> Result<Self, SafError> {
        let kinds = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| EmbeddingKind::parse(p).ok_or_else(|| SafError::UnknownKind(p.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingTypeSet::new(kinds)
    }

    pub fn kinds(&self) -> &[EmbeddingKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

impl std::fmt::Display for EmbeddingTypeSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.kinds.iter().map(|k| k.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

/// Cosine-similarity scores for one page pair, ordered like the embedding
/// type set they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityFeatures {
    pub et: EmbeddingTypeSet,
    pub scores: Vec<f64>,
}

impl SimilarityFeatures {
    pub fn new(et: EmbeddingTypeSet, scores: Vec<f64>) -> SimilarityFeatures {
        assert_eq!(et.len(), scores.len());
        SimilarityFeatures { et, scores }
    }
}

/// a.b / (|a||b|), clamped to [-1, 1]. A zero-norm side yields 0, so an
/// all-out-of-vocabulary page can never look like a clone of anything.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, SafError> {
    if a.kind != b.kind {
        return Err(SafError::KindMismatch(a.kind, b.kind));
    }
    if a.values.len() != b.values.len() {
        return Err(SafError::DimensionMismatch(a.values.len(), b.values.len()));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// One trained model per embedding kind.
#[derive(Debug, Default)]
pub struct ModelSet {
    models: BTreeMap<EmbeddingKind, Doc2VecModel>,
}

impl ModelSet {
    pub fn new() -> ModelSet {
        ModelSet::default()
    }

    pub fn insert(&mut self, model: Doc2VecModel) {
        self.models.insert(model.kind, model);
    }

    pub fn get(&self, kind: EmbeddingKind) -> Option<&Doc2VecModel> {
        self.models.get(&kind)
    }

    pub fn require(&self, kind: EmbeddingKind) -> Result<&Doc2VecModel, SafError> {
        self.models.get(&kind).ok_or(SafError::MissingModel(kind))
    }

    pub fn kinds(&self) -> impl Iterator<Item = EmbeddingKind> + '_ {
        self.models.keys().copied()
    }
}

/// Inference settings for one crawl or evaluation session.
///
/// The per-page inference seed is derived from the session seed and the
/// token sequence, so within a session identical pages always produce
/// identical embeddings while unrelated pages do not share an
/// initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    pub epochs: usize,
    pub session_seed: u64,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            epochs: 50,
            session_seed: 1,
        }
    }
}

/// FNV-1a over the session seed, the kind and the tokens.
pub fn page_seed(session_seed: u64, tokens: &TokenSequence) -> u64 {
    const PRIME: u64 = 0x100000001b3;
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in session_seed.to_le_bytes() {
        h = (h ^ byte as u64).wrapping_mul(PRIME);
    }
    h = (h ^ tokens.kind as u64).wrapping_mul(PRIME);
    for token in &tokens.tokens {
        for &byte in token.as_bytes() {
            h = (h ^ byte as u64).wrapping_mul(PRIME);
        }
        h = (h ^ 0xff).wrapping_mul(PRIME);
    }
    h
}

/// Infers the embedding of a page for one kind under the session seed
/// policy. All-out-of-vocabulary pages map to the zero vector.
pub fn embed_page(
    tree: &DomTree,
    kind: EmbeddingKind,
    models: &ModelSet,
    opts: &InferOptions,
) -> Result<Embedding, SafError> {
    let model = models.require(kind)?;
    let tokens = extract_tokens(&tree.root, kind);
    let seed = page_seed(opts.session_seed, &tokens);
    let inferred = infer_vector(model, &tokens, opts.epochs, seed)?;
    Ok(inferred.embedding)
}

/// Builds the similarity feature vector for a page pair: for each kind in
/// the set, both pages are embedded and their cosine similarity appended.
pub fn compute_features(
    p1: &DomTree,
    p2: &DomTree,
    et: &EmbeddingTypeSet,
    models: &ModelSet,
    opts: &InferOptions,
) -> Result<SimilarityFeatures, SafError> {
    let mut scores = Vec::with_capacity(et.len());
    for &kind in et.kinds() {
        let e1 = embed_page(p1, kind, models, opts)?;
        let e2 = embed_page(p2, kind, models, opts)?;
        scores.push(cosine_similarity(&e1, &e2)?);
    }
    Ok(SimilarityFeatures::new(et.clone(), scores))
}

/// Similarity features from already-inferred embeddings (the crawler caches
/// per-state embeddings and reuses them for every pair comparison).
pub fn features_from_embeddings(
    a: &BTreeMap<EmbeddingKind, Embedding>,
    b: &BTreeMap<EmbeddingKind, Embedding>,
    et: &EmbeddingTypeSet,
) -> Result<SimilarityFeatures, SafError> {
    let mut scores = Vec::with_capacity(et.len());
    for kind in et.kinds() {
        let ea = a.get(kind).ok_or(SafError::MissingModel(*kind))?;
        let eb = b.get(kind).ok_or(SafError::MissingModel(*kind))?;
        scores.push(cosine_similarity(ea, eb)?);
    }
    Ok(SimilarityFeatures::new(et.clone(), scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(kind: EmbeddingKind, values: &[f32]) -> Embedding {
        Embedding {
            kind,
            values: values.to_vec(),
        }
    }

    #[test]
    fn cosine_of_vector_with_itself_is_one() {
        let v = emb(EmbeddingKind::Content, &[1.0, 2.0, -0.5]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        let a = emb(EmbeddingKind::Tags, &[1.0, 0.0]);
        let b = emb(EmbeddingKind::Tags, &[0.0, 1.0]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_computed() {
        let a = emb(EmbeddingKind::Content, &[1.0, 2.0, 3.0]);
        let b = emb(EmbeddingKind::Content, &[4.0, 5.0, 6.0]);
        let got = cosine_similarity(&a, &b).unwrap();
        assert!((got - 0.97463).abs() < 1e-5, "got {got}");
    }

    #[test]
    fn cosine_zero_norm_convention() {
        let a = emb(EmbeddingKind::Content, &[0.0, 0.0]);
        let b = emb(EmbeddingKind::Content, &[1.0, 1.0]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_kind_and_dimension_checks() {
        let a = emb(EmbeddingKind::Content, &[1.0]);
        let b = emb(EmbeddingKind::Tags, &[1.0]);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(SafError::KindMismatch(_, _))
        ));
        let c = emb(EmbeddingKind::Content, &[1.0, 2.0]);
        assert!(matches!(
            cosine_similarity(&a, &c),
            Err(SafError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn type_set_is_canonically_ordered_and_deduped() {
        let et = EmbeddingTypeSet::new([
            EmbeddingKind::ContentTags,
            EmbeddingKind::Content,
            EmbeddingKind::Content,
        ])
        .unwrap();
        assert_eq!(
            et.kinds(),
            &[EmbeddingKind::Content, EmbeddingKind::ContentTags]
        );
        assert!(matches!(
            EmbeddingTypeSet::new([]),
            Err(SafError::EmptyTypeSet)
        ));
    }

    #[test]
    fn type_set_parsing() {
        let et = EmbeddingTypeSet::parse("content+tags").unwrap();
        assert_eq!(et.kinds(), &[EmbeddingKind::ContentTags]);
        let et = EmbeddingTypeSet::parse("tags,content").unwrap();
        assert_eq!(et.kinds(), &[EmbeddingKind::Content, EmbeddingKind::Tags]);
        assert!(EmbeddingTypeSet::parse("bogus").is_err());
    }

    #[test]
    fn page_seed_depends_on_content_and_session() {
        let t1 = TokenSequence {
            kind: EmbeddingKind::Content,
            tokens: vec!["a".into(), "b".into()],
        };
        let t2 = TokenSequence {
            kind: EmbeddingKind::Content,
            tokens: vec!["ab".into()],
        };
        assert_eq!(page_seed(1, &t1), page_seed(1, &t1));
        assert_ne!(page_seed(1, &t1), page_seed(2, &t1));
        assert_ne!(page_seed(1, &t1), page_seed(1, &t2));
    }
}
