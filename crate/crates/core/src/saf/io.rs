//! Versioned binary container for trained classifiers: magic `W2SAF`,
//! version, the embedding type set, then the kind tag and parameters.

use std::io::Read;
use std::path::Path;

use crate::binio::*;
use crate::dom::EmbeddingKind;
use crate::saf::classifiers::{ClassifierKind, ClassifierModel, TrainedClassifier, TreeNode};
use crate::saf::{EmbeddingTypeSet, PairLabel, SafError};

const MAGIC: &[u8; 5] = b"W2SAF";
const VERSION: u32 = 1;

impl TrainedClassifier {
    pub fn save(&self, path: &Path) -> Result<(), SafError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        write_u32(&mut buf, VERSION)?;
        write_u8(&mut buf, self.feature_set.len() as u8)?;
        for &kind in self.feature_set.kinds() {
            write_u8(&mut buf, kind as u8)?;
        }
        encode_classifier(&mut buf, self)?;
        write_atomic(path, &buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedClassifier, SafError> {
        let bytes = std::fs::read(path)?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)
            .map_err(|_| SafError::Format("file too short for header".into()))?;
        if &magic != MAGIC {
            return Err(SafError::Format("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(SafError::VersionMismatch(version));
        }
        let n_kinds = read_u8(&mut r)? as usize;
        let mut kinds = Vec::with_capacity(n_kinds);
        for _ in 0..n_kinds {
            kinds.push(kind_from_byte(read_u8(&mut r)?)?);
        }
        let et = EmbeddingTypeSet::new(kinds)?;
        let classifier = decode_classifier(&mut r, &et, 0)?;
        if !r.is_empty() {
            return Err(SafError::Format("trailing bytes".into()));
        }
        Ok(classifier)
    }
}

fn kind_from_byte(b: u8) -> Result<EmbeddingKind, SafError> {
    match b {
        0 => Ok(EmbeddingKind::Content),
        1 => Ok(EmbeddingKind::Tags),
        2 => Ok(EmbeddingKind::ContentTags),
        other => Err(SafError::Format(format!("unknown kind byte {other}"))),
    }
}

fn label_from_byte(b: u8) -> Result<PairLabel, SafError> {
    PairLabel::from_bit(b).ok_or_else(|| SafError::Format(format!("unknown label byte {b}")))
}

fn encode_classifier(buf: &mut Vec<u8>, c: &TrainedClassifier) -> Result<(), SafError> {
    match c.kind {
        ClassifierKind::Threshold => write_u8(buf, 0)?,
        ClassifierKind::KNearest { k } => {
            write_u8(buf, 1)?;
            write_u32(buf, k as u32)?;
        }
        ClassifierKind::DecisionTree => write_u8(buf, 2)?,
        ClassifierKind::GaussianNaiveBayes => write_u8(buf, 3)?,
        ClassifierKind::LinearSvm => write_u8(buf, 4)?,
        ClassifierKind::RandomForest { trees, seed } => {
            write_u8(buf, 5)?;
            write_u32(buf, trees as u32)?;
            write_u64(buf, seed)?;
        }
        ClassifierKind::MajorityEnsemble => write_u8(buf, 6)?,
    }
    write_u8(buf, c.degenerate as u8)?;
    encode_model(buf, &c.model)
}

fn decode_classifier(
    r: &mut &[u8],
    et: &EmbeddingTypeSet,
    depth: usize,
) -> Result<TrainedClassifier, SafError> {
    if depth > 4 {
        return Err(SafError::Format("classifier nesting too deep".into()));
    }
    let kind = match read_u8(r)? {
        0 => ClassifierKind::Threshold,
        1 => ClassifierKind::KNearest {
            k: read_u32(r)? as usize,
        },
        2 => ClassifierKind::DecisionTree,
        3 => ClassifierKind::GaussianNaiveBayes,
        4 => ClassifierKind::LinearSvm,
        5 => ClassifierKind::RandomForest {
            trees: read_u32(r)? as usize,
            seed: read_u64(r)?,
        },
        6 => ClassifierKind::MajorityEnsemble,
        other => return Err(SafError::Format(format!("unknown classifier tag {other}"))),
    };
    let degenerate = read_u8(r)? != 0;
    let model = decode_model(r, et, depth)?;
    Ok(TrainedClassifier {
        kind,
        feature_set: et.clone(),
        degenerate,
        model,
    })
}

fn encode_model(buf: &mut Vec<u8>, model: &ClassifierModel) -> Result<(), SafError> {
    match model {
        ClassifierModel::Constant(label) => {
            write_u8(buf, 0)?;
            write_u8(buf, label.as_bit())?;
        }
        ClassifierModel::Threshold { feature, cut } => {
            write_u8(buf, 1)?;
            write_u32(buf, *feature as u32)?;
            write_f64(buf, *cut)?;
        }
        ClassifierModel::KNearest { points, labels } => {
            write_u8(buf, 2)?;
            write_u32(buf, points.len() as u32)?;
            write_u32(buf, points.first().map_or(0, |p| p.len()) as u32)?;
            for point in points {
                for &v in point {
                    write_f64(buf, v)?;
                }
            }
            for label in labels {
                write_u8(buf, label.as_bit())?;
            }
        }
        ClassifierModel::Tree(root) => {
            write_u8(buf, 3)?;
            encode_tree(buf, root)?;
        }
        ClassifierModel::Gnb {
            log_priors,
            means,
            vars,
        } => {
            write_u8(buf, 4)?;
            write_f64(buf, log_priors[0])?;
            write_f64(buf, log_priors[1])?;
            write_u32(buf, means[0].len() as u32)?;
            for c in 0..2 {
                for &v in &means[c] {
                    write_f64(buf, v)?;
                }
                for &v in &vars[c] {
                    write_f64(buf, v)?;
                }
            }
        }
        ClassifierModel::Svm { weights, bias } => {
            write_u8(buf, 5)?;
            write_u32(buf, weights.len() as u32)?;
            for &w in weights {
                write_f64(buf, w)?;
            }
            write_f64(buf, *bias)?;
        }
        ClassifierModel::Forest(trees) => {
            write_u8(buf, 6)?;
            write_u32(buf, trees.len() as u32)?;
            for tree in trees {
                encode_tree(buf, tree)?;
            }
        }
        ClassifierModel::Ensemble(members) => {
            write_u8(buf, 7)?;
            write_u8(buf, members.len() as u8)?;
            for member in members {
                encode_classifier(buf, member)?;
            }
        }
    }
    Ok(())
}

fn decode_model(
    r: &mut &[u8],
    et: &EmbeddingTypeSet,
    depth: usize,
) -> Result<ClassifierModel, SafError> {
    Ok(match read_u8(r)? {
        0 => ClassifierModel::Constant(label_from_byte(read_u8(r)?)?),
        1 => ClassifierModel::Threshold {
            feature: read_u32(r)? as usize,
            cut: read_f64(r)?,
        },
        2 => {
            let n = read_u32(r)? as usize;
            let d = read_u32(r)? as usize;
            if n > 10_000_000 || d > 16 {
                return Err(SafError::Format("knn table size out of range".into()));
            }
            let mut points = Vec::with_capacity(n);
            for _ in 0..n {
                let mut p = Vec::with_capacity(d);
                for _ in 0..d {
                    p.push(read_f64(r)?);
                }
                points.push(p);
            }
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                labels.push(label_from_byte(read_u8(r)?)?);
            }
            ClassifierModel::KNearest { points, labels }
        }
        3 => ClassifierModel::Tree(decode_tree(r, 0)?),
        4 => {
            let log_priors = [read_f64(r)?, read_f64(r)?];
            let d = read_u32(r)? as usize;
            if d > 16 {
                return Err(SafError::Format("gnb dimension out of range".into()));
            }
            let mut means: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            let mut vars: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for c in 0..2 {
                for _ in 0..d {
                    means[c].push(read_f64(r)?);
                }
                for _ in 0..d {
                    vars[c].push(read_f64(r)?);
                }
            }
            ClassifierModel::Gnb {
                log_priors,
                means,
                vars,
            }
        }
        5 => {
            let d = read_u32(r)? as usize;
            if d > 16 {
                return Err(SafError::Format("svm dimension out of range".into()));
            }
            let mut weights = Vec::with_capacity(d);
            for _ in 0..d {
                weights.push(read_f64(r)?);
            }
            let bias = read_f64(r)?;
            ClassifierModel::Svm { weights, bias }
        }
        6 => {
            let n = read_u32(r)? as usize;
            if n > 10_000 {
                return Err(SafError::Format("forest size out of range".into()));
            }
            let mut trees = Vec::with_capacity(n);
            for _ in 0..n {
                trees.push(decode_tree(r, 0)?);
            }
            ClassifierModel::Forest(trees)
        }
        7 => {
            let n = read_u8(r)? as usize;
            let mut members = Vec::with_capacity(n);
            for _ in 0..n {
                members.push(decode_classifier(r, et, depth + 1)?);
            }
            ClassifierModel::Ensemble(members)
        }
        other => return Err(SafError::Format(format!("unknown model tag {other}"))),
    })
}

fn encode_tree(buf: &mut Vec<u8>, node: &TreeNode) -> Result<(), SafError> {
    match node {
        TreeNode::Leaf(label) => {
            write_u8(buf, 0)?;
            write_u8(buf, label.as_bit())?;
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            write_u8(buf, 1)?;
            write_u32(buf, *feature as u32)?;
            write_f64(buf, *threshold)?;
            encode_tree(buf, left)?;
            encode_tree(buf, right)?;
        }
    }
    Ok(())
}

fn decode_tree(r: &mut &[u8], depth: usize) -> Result<TreeNode, SafError> {
    if depth > 128 {
        return Err(SafError::Format("tree too deep".into()));
    }
    Ok(match read_u8(r)? {
        0 => TreeNode::Leaf(label_from_byte(read_u8(r)?)?),
        1 => {
            let feature = read_u32(r)? as usize;
            let threshold = read_f64(r)?;
            let left = decode_tree(r, depth + 1)?;
            let right = decode_tree(r, depth + 1)?;
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        other => return Err(SafError::Format(format!("unknown tree tag {other}"))),
    })
}
