//! Versioned binary container for trained models.
//!
//! Layout: magic `W2EMB`, format version (u32), kind byte, hyperparameter
//! block, vocabulary block, then the two little-endian f32 matrices.

use std::io::Read;
use std::path::Path;

use crate::binio::*;
use crate::dom::EmbeddingKind;
use crate::embedding::vocab::{VocabEntry, Vocabulary};
use crate::embedding::{Doc2VecModel, EmbedError, Hyperparams, Matrix};

const MAGIC: &[u8; 5] = b"W2EMB";
const VERSION: u32 = 1;

fn kind_byte(kind: EmbeddingKind) -> u8 {
    match kind {
        EmbeddingKind::Content => 0,
        EmbeddingKind::Tags => 1,
        EmbeddingKind::ContentTags => 2,
    }
}

fn kind_from_byte(b: u8) -> Result<EmbeddingKind, EmbedError> {
    match b {
        0 => Ok(EmbeddingKind::Content),
        1 => Ok(EmbeddingKind::Tags),
        2 => Ok(EmbeddingKind::ContentTags),
        other => Err(EmbedError::Format(format!("unknown kind byte {other}"))),
    }
}

pub fn save_model(model: &Doc2VecModel, path: &Path) -> Result<(), EmbedError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    write_u32(&mut buf, VERSION)?;
    write_u8(&mut buf, kind_byte(model.kind))?;

    let h = &model.hyper;
    write_u32(&mut buf, h.dim as u32)?;
    write_u32(&mut buf, h.epochs as u32)?;
    write_u32(&mut buf, h.negative_samples as u32)?;
    write_u32(&mut buf, h.min_count as u32)?;
    write_f64(&mut buf, h.initial_lr)?;
    write_f64(&mut buf, h.final_lr)?;
    write_u64(&mut buf, h.seed)?;

    write_u32(&mut buf, model.vocab.len() as u32)?;
    write_u64(&mut buf, model.vocab.total_tokens())?;
    for entry in model.vocab.entries() {
        write_str(&mut buf, &entry.token)?;
        write_u64(&mut buf, entry.count)?;
    }

    write_u32(&mut buf, model.doc_vectors.rows() as u32)?;
    write_f32_slice(&mut buf, model.word_out.data())?;
    write_f32_slice(&mut buf, model.doc_vectors.data())?;

    write_atomic(path, &buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Doc2VecModel, EmbedError> {
    let bytes = std::fs::read(path)?;
    let mut r = bytes.as_slice();

    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| EmbedError::Format("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(EmbedError::Format("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(EmbedError::VersionMismatch(version));
    }
    let kind = kind_from_byte(read_u8(&mut r)?)?;

    let dim = read_u32(&mut r)? as usize;
    let epochs = read_u32(&mut r)? as usize;
    let negative_samples = read_u32(&mut r)? as usize;
    let min_count = read_u32(&mut r)? as usize;
    let initial_lr = read_f64(&mut r)?;
    let final_lr = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;
    let hyper = Hyperparams {
        dim,
        epochs,
        negative_samples,
        initial_lr,
        final_lr,
        min_count,
        seed,
    };

    let vocab_len = read_u32(&mut r)? as usize;
    let total_tokens = read_u64(&mut r)?;
    let mut entries = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let token = read_str(&mut r)?;
        let count = read_u64(&mut r)?;
        entries.push(VocabEntry { token, count });
    }
    let vocab = Vocabulary::from_entries(entries, total_tokens);

    let doc_rows = read_u32(&mut r)? as usize;
    let word_data = read_f32_vec(&mut r, vocab_len * dim)?;
    let doc_data = read_f32_vec(&mut r, doc_rows * dim)?;
    if !r.is_empty() {
        return Err(EmbedError::Format("trailing bytes after matrices".into()));
    }

    Ok(Doc2VecModel {
        kind,
        vocab,
        hyper,
        word_out: Matrix::from_data(vocab_len, dim, word_data),
        doc_vectors: Matrix::from_data(doc_rows, dim, doc_data),
    })
}
