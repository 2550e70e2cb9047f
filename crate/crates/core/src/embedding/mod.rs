//! PV-DBOW document embeddings with negative sampling.
//!
//! A model holds one vector per training document and one output vector per
//! vocabulary word. Training repeatedly picks a document position and pushes
//! the document vector toward predicting that word against sampled noise
//! words. Inference freezes the word vectors and fits a fresh document
//! vector with the same objective.

mod io;
mod train;
mod vocab;

pub use train::{train_dbow, TrainOutput};
pub use vocab::{build_vocab, VocabEntry, Vocabulary};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dom::{EmbeddingKind, TokenSequence};
use vocab::NoiseTable;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no token passed the min_count filter")]
    EmptyVocabulary,
    #[error("corpus mixes token-sequence kinds {0} and {1}")]
    MixedKinds(EmbeddingKind, EmbeddingKind),
    #[error("token sequence kind {found} does not match model kind {expected}")]
    KindMismatch {
        expected: EmbeddingKind,
        found: EmbeddingKind,
    },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("unsupported model format version {0}")]
    VersionMismatch(u32),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Training hyperparameters. The defaults are the ones every acceptance
/// fixture uses; all of them are overridable from the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub epochs: usize,
    pub negative_samples: usize,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 100,
            epochs: 100,
            negative_samples: 5,
            initial_lr: 0.025,
            final_lr: 1e-4,
            min_count: 2,
            seed: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidHyperparams("dim must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(EmbedError::InvalidHyperparams("epochs must be >= 1".into()));
        }
        if self.negative_samples == 0 {
            return Err(EmbedError::InvalidHyperparams(
                "negative_samples must be >= 1".into(),
            ));
        }
        if !(self.final_lr > 0.0 && self.final_lr <= self.initial_lr) {
            return Err(EmbedError::InvalidHyperparams(
                "learning rates must satisfy 0 < final_lr <= initial_lr".into(),
            ));
        }
        Ok(())
    }
}

/// Row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub(crate) fn from_data(rows: usize, cols: usize, data: Vec<f32>) -> Matrix {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn data(&self) -> &[f32] {
        &self.data
    }

    /// Fills the matrix with values drawn uniformly from
    /// [-0.5/cols, +0.5/cols], the usual init range for this model family.
    pub(crate) fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let half = 0.5 / self.cols as f64;
        for v in &mut self.data {
            *v = rng.random_range(-half..half) as f32;
        }
    }
}

/// A trained PV-DBOW model for one token-sequence kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Doc2VecModel {
    pub kind: EmbeddingKind,
    pub vocab: Vocabulary,
    pub hyper: Hyperparams,
    /// V x dim word output vectors.
    pub word_out: Matrix,
    /// D x dim vectors of the training documents.
    pub doc_vectors: Matrix,
}

impl Doc2VecModel {
    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn doc_embedding(&self, doc: usize) -> Embedding {
        Embedding {
            kind: self.kind,
            values: self.doc_vectors.row(doc).to_vec(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), EmbedError> {
        io::save_model(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<Doc2VecModel, EmbedError> {
        io::load_model(path)
    }
}

/// A document vector of one representation kind.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub values: Vec<f32>,
}

/// Result of [`infer_vector`]. When every token was out of vocabulary the
/// embedding is the zero vector and `all_tokens_unknown` is set; the caller
/// decides what that means (the SAF treats such pages as distinct from
/// everything).
#[derive(Debug, Clone, PartialEq)]
pub struct Inferred {
    pub embedding: Embedding,
    pub all_tokens_unknown: bool,
}

// ---------------------------------------------------------------------------
// Negative-sampling objective
// ---------------------------------------------------------------------------

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cosine similarity of two raw f32 vectors; 0 when either norm is zero.
pub fn cosine_of(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-word logistic coefficients and the resulting loss/gradient for one
/// (document, positive word, negative words) bundle.
///
/// Loss: L = -ln sigma(v.w+) - sum_neg ln sigma(-v.w-).
/// The coefficient of word j in dL/dv is g_j = sigma(v.w_j) - label_j.
pub(crate) struct StepGradients {
    pub loss: f64,
    pub doc_grad: Vec<f64>,
    /// Positive word first, then one per negative.
    pub word_coeffs: Vec<f64>,
}

pub(crate) fn step_gradients(doc: &[f64], positive: &[f64], negatives: &[&[f64]]) -> StepGradients {
    let dim = doc.len();
    let mut doc_grad = vec![0.0; dim];
    let mut word_coeffs = Vec::with_capacity(1 + negatives.len());
    let mut loss = 0.0;

    let p = sigmoid(dot(doc, positive));
    loss -= p.max(f64::MIN_POSITIVE).ln();
    let g = p - 1.0;
    word_coeffs.push(g);
    for (acc, &w) in doc_grad.iter_mut().zip(positive) {
        *acc += g * w;
    }

    for neg in negatives {
        let q = sigmoid(dot(doc, neg));
        loss -= (1.0 - q).max(f64::MIN_POSITIVE).ln();
        let g = q;
        word_coeffs.push(g);
        for (acc, &w) in doc_grad.iter_mut().zip(neg.iter()) {
            *acc += g * w;
        }
    }

    StepGradients {
        loss,
        doc_grad,
        word_coeffs,
    }
}

/// Loss of one update bundle.
pub fn negative_sampling_loss(doc: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    step_gradients(doc, positive, negatives).loss
}

/// Analytic gradient of [`negative_sampling_loss`] with respect to the
/// document vector.
pub fn negative_sampling_doc_grad(doc: &[f64], positive: &[f64], negatives: &[&[f64]]) -> Vec<f64> {
    step_gradients(doc, positive, negatives).doc_grad
}

/// One gradient step on the document vector only (the inference-time update;
/// training additionally moves the word rows). Returns the loss before the
/// update.
pub fn sgd_step(doc: &mut [f64], positive: &[f64], negatives: &[&[f64]], lr: f64) -> f64 {
    let grads = step_gradients(doc, positive, negatives);
    for (v, g) in doc.iter_mut().zip(&grads.doc_grad) {
        *v -= lr * g;
    }
    grads.loss
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// Fits a vector for an unseen token sequence against the frozen word
/// vectors of `model`.
pub fn infer_vector(
    model: &Doc2VecModel,
    tokens: &TokenSequence,
    infer_epochs: usize,
    seed: u64,
) -> Result<Inferred, EmbedError> {
    if tokens.kind != model.kind {
        return Err(EmbedError::KindMismatch {
            expected: model.kind,
            found: tokens.kind,
        });
    }
    let dim = model.dim();
    let ids: Vec<usize> = tokens
        .tokens
        .iter()
        .filter_map(|t| model.vocab.index_of(t))
        .collect();
    if ids.is_empty() {
        return Ok(Inferred {
            embedding: Embedding {
                kind: model.kind,
                values: vec![0.0; dim],
            },
            all_tokens_unknown: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    let mut doc: Vec<f64> = (0..dim).map(|_| rng.random_range(-half..half)).collect();

    let noise = NoiseTable::new(&model.vocab);
    let total_updates = (infer_epochs * ids.len()).max(1) as f64;
    let hyper = &model.hyper;
    let mut update = 0u64;
    let mut pos_buf = vec![0.0f64; dim];
    let mut neg_flat = vec![0.0f64; dim * hyper.negative_samples];

    for _ in 0..infer_epochs {
        for &word in &ids {
            let lr = (hyper.initial_lr
                - (hyper.initial_lr - hyper.final_lr) * update as f64 / total_updates)
                .max(hyper.final_lr);
            update += 1;

            copy_row(model.word_out.row(word), &mut pos_buf);
            let mut n_negs = 0;
            for _ in 0..hyper.negative_samples {
                let neg = noise.sample(&mut rng);
                if neg == word {
                    continue;
                }
                copy_row(
                    model.word_out.row(neg),
                    &mut neg_flat[n_negs * dim..(n_negs + 1) * dim],
                );
                n_negs += 1;
            }
            let neg_refs: Vec<&[f64]> = neg_flat[..n_negs * dim].chunks_exact(dim).collect();
            sgd_step(&mut doc, &pos_buf, &neg_refs, lr);
        }
    }

    let values: Vec<f32> = doc.iter().map(|&v| v as f32).collect();
    Ok(Inferred {
        embedding: Embedding {
            kind: model.kind,
            values,
        },
        all_tokens_unknown: false,
    })
}

fn copy_row(src: &[f32], dst: &mut [f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s as f64;
    }
}
