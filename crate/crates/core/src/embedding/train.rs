//! PV-DBOW training.
//!
//! Both matrices are held in atomic f32 cells during training so one code
//! path serves both modes: with a single worker every update is sequential
//! and the run is bit-reproducible for a fixed seed; with several workers
//! documents are sharded and the shards update the shared matrices without
//! synchronization, so concurrent writes may be lost (hogwild) and only the
//! quality properties are promised.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dom::TokenSequence;
use crate::embedding::vocab::{build_vocab, NoiseTable};
use crate::embedding::{step_gradients, Doc2VecModel, EmbedError, Hyperparams, Matrix};

pub struct TrainOutput {
    pub model: Doc2VecModel,
    /// Mean per-update loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

struct AtomicMatrix {
    cols: usize,
    data: Vec<AtomicU32>,
}

impl AtomicMatrix {
    fn from(m: &Matrix) -> AtomicMatrix {
        AtomicMatrix {
            cols: m.cols(),
            data: m.data().iter().map(|v| AtomicU32::new(v.to_bits())).collect(),
        }
    }

    fn into_matrix(self, rows: usize) -> Matrix {
        let data: Vec<f32> = self
            .data
            .into_iter()
            .map(|v| f32::from_bits(v.into_inner()))
            .collect();
        Matrix::from_data(rows, self.cols, data)
    }

    fn read_row(&self, row: usize, out: &mut [f64]) {
        let base = row * self.cols;
        for (i, v) in out.iter_mut().enumerate() {
            *v = f32::from_bits(self.data[base + i].load(Ordering::Relaxed)) as f64;
        }
    }

    /// row += scale * delta, element-wise. Plain read-modify-write; lost
    /// updates are acceptable in multi-worker mode.
    fn add_scaled(&self, row: usize, delta: &[f64], scale: f64) {
        let base = row * self.cols;
        for (i, &d) in delta.iter().enumerate() {
            let cell = &self.data[base + i];
            let cur = f32::from_bits(cell.load(Ordering::Relaxed)) as f64;
            cell.store(((cur + scale * d) as f32).to_bits(), Ordering::Relaxed);
        }
    }
}

/// Trains one model on a single-kind corpus.
pub fn train_dbow(
    corpus: &[TokenSequence],
    hyper: &Hyperparams,
    workers: usize,
) -> Result<TrainOutput, EmbedError> {
    hyper.validate()?;
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let kind = corpus[0].kind;
    for seq in corpus {
        if seq.kind != kind {
            return Err(EmbedError::MixedKinds(kind, seq.kind));
        }
    }
    let vocab = build_vocab(corpus, hyper.min_count)?;
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|seq| {
            seq.tokens
                .iter()
                .filter_map(|t| vocab.index_of(t))
                .collect()
        })
        .collect();

    let dim = hyper.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut doc_vectors = Matrix::zeros(docs.len(), dim);
    doc_vectors.init_uniform(&mut rng);
    let mut word_out = Matrix::zeros(vocab.len(), dim);
    word_out.init_uniform(&mut rng);

    let positions_per_epoch: u64 = docs.iter().map(|d| d.len() as u64).sum();
    let total_updates = (hyper.epochs as u64 * positions_per_epoch).max(1);

    let doc_mat = AtomicMatrix::from(&doc_vectors);
    let word_mat = AtomicMatrix::from(&word_out);
    let noise = NoiseTable::new(&vocab);
    let update_counter = AtomicU64::new(0);

    let workers = workers.max(1).min(docs.len().max(1));
    let shards: Vec<Vec<usize>> = (0..workers)
        .map(|w| (w..docs.len()).step_by(workers).collect())
        .collect();

    let mut per_shard_losses: Vec<Vec<(f64, u64)>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, shard) in shards.iter().enumerate() {
            let docs = &docs;
            let doc_mat = &doc_mat;
            let word_mat = &word_mat;
            let noise = &noise;
            let update_counter = &update_counter;
            handles.push(scope.spawn(move || {
                run_shard(ShardCtx {
                    hyper,
                    shard,
                    docs,
                    doc_mat,
                    word_mat,
                    noise,
                    update_counter,
                    total_updates,
                    rng_seed: hyper.seed.wrapping_add(w as u64).wrapping_add(1),
                })
            }));
        }
        for handle in handles {
            per_shard_losses.push(handle.join().expect("training worker panicked"));
        }
    });

    let epoch_losses = (0..hyper.epochs)
        .map(|e| {
            let (sum, count) = per_shard_losses
                .iter()
                .fold((0.0, 0u64), |(s, c), shard| {
                    (s + shard[e].0, c + shard[e].1)
                });
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();

    let word_rows = vocab.len();
    let model = Doc2VecModel {
        kind,
        vocab,
        hyper: hyper.clone(),
        word_out: word_mat.into_matrix(word_rows),
        doc_vectors: doc_mat.into_matrix(docs.len()),
    };
    Ok(TrainOutput {
        model,
        epoch_losses,
    })
}

struct ShardCtx<'a> {
    hyper: &'a Hyperparams,
    shard: &'a [usize],
    docs: &'a [Vec<usize>],
    doc_mat: &'a AtomicMatrix,
    word_mat: &'a AtomicMatrix,
    noise: &'a NoiseTable,
    update_counter: &'a AtomicU64,
    total_updates: u64,
    rng_seed: u64,
}

/// Runs all epochs for one document shard, returning per-epoch
/// (loss sum, update count).
fn run_shard(ctx: ShardCtx<'_>) -> Vec<(f64, u64)> {
    let dim = ctx.hyper.dim;
    let negatives = ctx.hyper.negative_samples;
    let mut doc_buf = vec![0.0f64; dim];
    let mut pos_buf = vec![0.0f64; dim];
    let mut neg_flat = vec![0.0f64; dim * negatives];
    let mut neg_ids = Vec::with_capacity(negatives);
    let mut out = Vec::with_capacity(ctx.hyper.epochs);

    for _ in 0..ctx.hyper.epochs {
        // The noise rng restarts every epoch, so each epoch optimizes and
        // reports the same finite-sum objective and epoch losses are
        // directly comparable.
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.rng_seed);
        let mut loss_sum = 0.0;
        let mut count = 0u64;
        for &doc_id in ctx.shard {
            for &word in &ctx.docs[doc_id] {
                let t = ctx.update_counter.fetch_add(1, Ordering::Relaxed);
                let lr = (ctx.hyper.initial_lr
                    - (ctx.hyper.initial_lr - ctx.hyper.final_lr) * t as f64
                        / ctx.total_updates as f64)
                    .max(ctx.hyper.final_lr);

                neg_ids.clear();
                for _ in 0..negatives {
                    let neg = ctx.noise.sample(&mut rng);
                    if neg != word {
                        neg_ids.push(neg);
                    }
                }

                ctx.doc_mat.read_row(doc_id, &mut doc_buf);
                ctx.word_mat.read_row(word, &mut pos_buf);
                for (i, &neg) in neg_ids.iter().enumerate() {
                    ctx.word_mat
                        .read_row(neg, &mut neg_flat[i * dim..(i + 1) * dim]);
                }
                let neg_refs: Vec<&[f64]> =
                    neg_flat[..neg_ids.len() * dim].chunks_exact(dim).collect();

                let grads = step_gradients(&doc_buf, &pos_buf, &neg_refs);
                ctx.doc_mat.add_scaled(doc_id, &grads.doc_grad, -lr);
                ctx.word_mat
                    .add_scaled(word, &doc_buf, -lr * grads.word_coeffs[0]);
                for (i, &neg) in neg_ids.iter().enumerate() {
                    ctx.word_mat
                        .add_scaled(neg, &doc_buf, -lr * grads.word_coeffs[i + 1]);
                }

                loss_sum += grads.loss;
                count += 1;
            }
        }
        out.push((loss_sum, count));
    }
    out
}
