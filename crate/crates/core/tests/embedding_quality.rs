//! Quality and determinism checks for the embedding trainer on the
//! synthetic three-document corpus: two identical documents and one with
//! disjoint vocabulary.

use statefold::dom::{EmbeddingKind, TokenSequence};
use statefold::embedding::{
    cosine_of, infer_vector, train_dbow, Doc2VecModel, Hyperparams, TrainOutput,
};

fn seq(tokens: &[&str]) -> TokenSequence {
    TokenSequence {
        kind: EmbeddingKind::Content,
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
    }
}

fn synthetic_corpus() -> Vec<TokenSequence> {
    let shop: Vec<&str> = ["buy", "item", "now"].repeat(10);
    let auth: Vec<&str> = ["login", "user", "password"].repeat(10);
    vec![seq(&shop), seq(&shop), seq(&auth)]
}

fn train(seed: u64) -> TrainOutput {
    let hyper = Hyperparams {
        seed,
        ..Hyperparams::default()
    };
    train_dbow(&synthetic_corpus(), &hyper, 1).unwrap()
}

fn doc_cosine(model: &Doc2VecModel, a: usize, b: usize) -> f64 {
    cosine_of(model.doc_vectors.row(a), model.doc_vectors.row(b))
}

#[test]
fn identical_documents_embed_closer_than_disjoint_ones() {
    let out = train(1);
    let same = doc_cosine(&out.model, 0, 1);
    let cross = doc_cosine(&out.model, 0, 2);
    assert!(
        same > cross,
        "cosine(identical)={same} should exceed cosine(disjoint)={cross}"
    );
}

#[test]
fn doc_vectors_have_configured_dimension() {
    let out = train(2);
    assert_eq!(out.model.dim(), 100);
    assert_eq!(out.model.doc_vectors.row(0).len(), 100);
    assert!(out
        .model
        .doc_vectors
        .row(0)
        .iter()
        .all(|v| v.is_finite()));
}

#[test]
fn fixed_seed_single_worker_is_bit_identical() {
    let a = train(7);
    let b = train(7);
    assert_eq!(a.model, b.model);
    assert_eq!(a.epoch_losses, b.epoch_losses);
}

#[test]
fn loss_trend_is_decreasing() {
    let out = train(5);
    let losses = &out.epoch_losses;
    assert_eq!(losses.len(), 100);
    let violations = (0..losses.len() - 5)
        .filter(|&e| losses[e] < losses[e + 5])
        .count();
    assert!(
        violations <= 1,
        "{violations} epochs violate the 5-epoch decrease trend: {losses:?}"
    );
}

#[test]
fn inference_is_deterministic_and_retrieves_own_document() {
    let out = train(3);
    let corpus = synthetic_corpus();
    let a = infer_vector(&out.model, &corpus[2], 50, 99).unwrap();
    let b = infer_vector(&out.model, &corpus[2], 50, 99).unwrap();
    assert_eq!(a, b);
    assert!(!a.all_tokens_unknown);

    // The inferred vector for doc 2's tokens should be nearest to doc 2.
    let best = (0..3)
        .map(|d| (d, cosine_of(&a.embedding.values, out.model.doc_vectors.row(d))))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    assert_eq!(best.0, 2, "self-retrieval failed: {best:?}");
}

#[test]
fn all_oov_tokens_yield_flagged_zero_vector() {
    let out = train(4);
    let oov = seq(&["zzz", "qqq"]);
    let inferred = infer_vector(&out.model, &oov, 50, 1).unwrap();
    assert!(inferred.all_tokens_unknown);
    assert!(inferred.embedding.values.iter().all(|&v| v == 0.0));
}

#[test]
fn kind_mismatch_is_rejected() {
    let out = train(6);
    let tags = TokenSequence {
        kind: EmbeddingKind::Tags,
        tokens: vec!["html".into()],
    };
    assert!(infer_vector(&out.model, &tags, 10, 1).is_err());
}

#[test]
fn multi_worker_training_still_separates_documents() {
    let hyper = Hyperparams::default();
    let out = train_dbow(&synthetic_corpus(), &hyper, 3).unwrap();
    let same = doc_cosine(&out.model, 0, 1);
    let cross = doc_cosine(&out.model, 0, 2);
    assert!(out.model.doc_vectors.row(0).iter().all(|v| v.is_finite()));
    assert!(same > cross, "same={same} cross={cross}");
}

#[test]
fn model_round_trip_is_lossless() {
    let out = train(8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.w2emb");
    out.model.save(&path).unwrap();
    let loaded = Doc2VecModel::load(&path).unwrap();
    assert_eq!(out.model, loaded);
}

#[test]
fn truncated_model_file_is_rejected() {
    let out = train(9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.w2emb");
    out.model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(Doc2VecModel::load(&path).is_err());
}
