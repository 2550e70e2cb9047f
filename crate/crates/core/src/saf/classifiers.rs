//! Classifiers over similarity feature vectors.
//!
//! All of them are trained on `(SimilarityFeatures, PairLabel)` datasets and
//! predict deterministically. A dataset containing a single class yields a
//! constant classifier flagged as degenerate rather than an error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::saf::{EmbeddingTypeSet, PairLabel, SafError, SimilarityFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    /// Single cut on a designated feature (the last one in set order),
    /// chosen to maximize training F1. Predicts clone when score > cut.
    Threshold,
    KNearest { k: usize },
    DecisionTree,
    GaussianNaiveBayes,
    LinearSvm,
    RandomForest { trees: usize, seed: u64 },
    /// Majority vote over all other kinds; ties resolve to distinct.
    MajorityEnsemble,
}

impl ClassifierKind {
    pub fn parse(s: &str) -> Result<ClassifierKind, SafError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "threshold" => Ok(ClassifierKind::Threshold),
            "knn" | "nearest" | "k-nearest" => Ok(ClassifierKind::KNearest { k: 5 }),
            "tree" | "decision-tree" => Ok(ClassifierKind::DecisionTree),
            "naive-bayes" | "gnb" => Ok(ClassifierKind::GaussianNaiveBayes),
            "svm" | "linear-svm" => Ok(ClassifierKind::LinearSvm),
            "forest" | "random-forest" => Ok(ClassifierKind::RandomForest {
                trees: 50,
                seed: 42,
            }),
            "ensemble" => Ok(ClassifierKind::MajorityEnsemble),
            other => Err(SafError::UnknownClassifier(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Threshold => "threshold",
            ClassifierKind::KNearest { .. } => "knn",
            ClassifierKind::DecisionTree => "decision-tree",
            ClassifierKind::GaussianNaiveBayes => "naive-bayes",
            ClassifierKind::LinearSvm => "svm",
            ClassifierKind::RandomForest { .. } => "random-forest",
            ClassifierKind::MajorityEnsemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TreeNode {
    Leaf(PairLabel),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn predict(&self, x: &[f64]) -> PairLabel {
        match self {
            TreeNode::Leaf(label) => *label,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ClassifierModel {
    Constant(PairLabel),
    Threshold {
        feature: usize,
        cut: f64,
    },
    KNearest {
        points: Vec<Vec<f64>>,
        labels: Vec<PairLabel>,
    },
    Tree(TreeNode),
    Gnb {
        log_priors: [f64; 2],
        means: [Vec<f64>; 2],
        vars: [Vec<f64>; 2],
    },
    Svm {
        weights: Vec<f64>,
        bias: f64,
    },
    Forest(Vec<TreeNode>),
    Ensemble(Vec<TrainedClassifier>),
}

/// A trained classifier together with the embedding type set its features
/// were computed for. Prediction is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub(crate) kind: ClassifierKind,
    pub(crate) feature_set: EmbeddingTypeSet,
    pub(crate) degenerate: bool,
    pub(crate) model: ClassifierModel,
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn feature_set(&self) -> &EmbeddingTypeSet {
        &self.feature_set
    }

    /// True when training saw a single class and the classifier always
    /// predicts it.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// A ready-made threshold classifier with a fixed cut on the last
    /// feature, the shape crawler baselines use.
    pub fn threshold_at(cut: f64, et: EmbeddingTypeSet) -> TrainedClassifier {
        let feature = et.len() - 1;
        TrainedClassifier {
            kind: ClassifierKind::Threshold,
            feature_set: et,
            degenerate: false,
            model: ClassifierModel::Threshold { feature, cut },
        }
    }

    /// Ensemble members, when this is an ensemble.
    pub fn members(&self) -> Option<&[TrainedClassifier]> {
        match &self.model {
            ClassifierModel::Ensemble(members) => Some(members),
            _ => None,
        }
    }

    pub fn classify(&self, features: &SimilarityFeatures) -> Result<PairLabel, SafError> {
        if features.et != self.feature_set {
            return Err(SafError::FeatureMismatch);
        }
        Ok(self.predict(&features.scores))
    }

    fn predict(&self, x: &[f64]) -> PairLabel {
        match &self.model {
            ClassifierModel::Constant(label) => *label,
            ClassifierModel::Threshold { feature, cut } => {
                if x[*feature] > *cut {
                    PairLabel::Clone
                } else {
                    PairLabel::Distinct
                }
            }
            ClassifierModel::KNearest { points, labels } => {
                let k = match self.kind {
                    ClassifierKind::KNearest { k } => k,
                    _ => 5,
                };
                knn_predict(points, labels, k, x)
            }
            ClassifierModel::Tree(root) => root.predict(x),
            ClassifierModel::Gnb {
                log_priors,
                means,
                vars,
            } => gnb_predict(log_priors, means, vars, x),
            ClassifierModel::Svm { weights, bias } => {
                let score: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
                if score > 0.0 {
                    PairLabel::Clone
                } else {
                    PairLabel::Distinct
                }
            }
            ClassifierModel::Forest(trees) => {
                let clones = trees
                    .iter()
                    .filter(|t| t.predict(x) == PairLabel::Clone)
                    .count();
                majority(clones, trees.len())
            }
            ClassifierModel::Ensemble(members) => {
                let clones = members
                    .iter()
                    .filter(|m| m.predict(x) == PairLabel::Clone)
                    .count();
                majority(clones, members.len())
            }
        }
    }
}

/// Ties resolve to distinct: a false merge destroys a model state, a false
/// split only adds redundancy.
fn majority(clone_votes: usize, total: usize) -> PairLabel {
    if 2 * clone_votes > total {
        PairLabel::Clone
    } else {
        PairLabel::Distinct
    }
}

/// Trains a classifier of the requested kind.
pub fn train_classifier(
    kind: ClassifierKind,
    dataset: &[(SimilarityFeatures, PairLabel)],
) -> Result<TrainedClassifier, SafError> {
    if dataset.is_empty() {
        return Err(SafError::EmptyDataset);
    }
    let feature_set = dataset[0].0.et.clone();
    for (features, _) in dataset {
        if features.et != feature_set {
            return Err(SafError::FeatureMismatch);
        }
    }

    let first = dataset[0].1;
    if dataset.iter().all(|(_, label)| *label == first) {
        return Ok(TrainedClassifier {
            kind,
            feature_set,
            degenerate: true,
            model: ClassifierModel::Constant(first),
        });
    }

    let xs: Vec<&[f64]> = dataset.iter().map(|(f, _)| f.scores.as_slice()).collect();
    let ys: Vec<PairLabel> = dataset.iter().map(|(_, l)| *l).collect();
    let dim = feature_set.len();

    let model = match kind {
        ClassifierKind::Threshold => train_threshold(&xs, &ys, dim - 1),
        ClassifierKind::KNearest { .. } => ClassifierModel::KNearest {
            points: xs.iter().map(|x| x.to_vec()).collect(),
            labels: ys.clone(),
        },
        ClassifierKind::DecisionTree => ClassifierModel::Tree(build_tree(&xs, &ys, None, 0)),
        ClassifierKind::GaussianNaiveBayes => train_gnb(&xs, &ys, dim),
        ClassifierKind::LinearSvm => train_svm(&xs, &ys, dim),
        ClassifierKind::RandomForest { trees, seed } => train_forest(&xs, &ys, trees, seed),
        ClassifierKind::MajorityEnsemble => {
            let members = [
                ClassifierKind::Threshold,
                ClassifierKind::KNearest { k: 5 },
                ClassifierKind::DecisionTree,
                ClassifierKind::GaussianNaiveBayes,
                ClassifierKind::LinearSvm,
                ClassifierKind::RandomForest {
                    trees: 50,
                    seed: 42,
                },
            ]
            .into_iter()
            .map(|k| train_classifier(k, dataset))
            .collect::<Result<Vec<_>, _>>()?;
            ClassifierModel::Ensemble(members)
        }
    };

    Ok(TrainedClassifier {
        kind,
        feature_set,
        degenerate: false,
        model,
    })
}

// ---------------------------------------------------------------------------
// Threshold
// ---------------------------------------------------------------------------

/// Scans candidate cuts (sorted, so the result is independent of dataset
/// order) and keeps the one maximizing F1 with clone as the positive class.
/// Ties go to the largest cut.
fn train_threshold(xs: &[&[f64]], ys: &[PairLabel], feature: usize) -> ClassifierModel {
    let mut values: Vec<f64> = xs.iter().map(|x| x[feature]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let mut candidates = vec![values[0] - 1.0];
    candidates.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push(*values.last().unwrap());

    let mut best = (f64::NEG_INFINITY, 0.0);
    for &cut in &candidates {
        let mut tp = 0u32;
        let mut fp = 0u32;
        let mut fn_ = 0u32;
        for (x, y) in xs.iter().zip(ys) {
            let predicted_clone = x[feature] > cut;
            match (predicted_clone, y) {
                (true, PairLabel::Clone) => tp += 1,
                (true, PairLabel::Distinct) => fp += 1,
                (false, PairLabel::Clone) => fn_ += 1,
                (false, PairLabel::Distinct) => {}
            }
        }
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if f1 > best.0 || (f1 == best.0 && cut > best.1) {
            best = (f1, cut);
        }
    }
    ClassifierModel::Threshold {
        feature,
        cut: best.1,
    }
}

// ---------------------------------------------------------------------------
// k nearest neighbours
// ---------------------------------------------------------------------------

fn knn_predict(points: &[Vec<f64>], labels: &[PairLabel], k: usize, x: &[f64]) -> PairLabel {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let dist = |i: usize| -> f64 {
        points[i]
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let k = k.max(1).min(points.len());
    let clones = order[..k]
        .iter()
        .filter(|&&i| labels[i] == PairLabel::Clone)
        .count();
    majority(clones, k)
}

// ---------------------------------------------------------------------------
// CART decision tree and random forest
// ---------------------------------------------------------------------------

fn gini(clones: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = clones as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

fn majority_label(ys: &[PairLabel]) -> PairLabel {
    let clones = ys.iter().filter(|&&y| y == PairLabel::Clone).count();
    majority(clones, ys.len())
}

/// Grows a CART tree on Gini impurity. When `feature_rng` is set, each split
/// considers a random subset of floor(sqrt(d)) features (the forest case);
/// otherwise all features are candidates. Splits must strictly reduce
/// impurity, so recursion terminates; the depth cap is a backstop.
fn build_tree(
    xs: &[&[f64]],
    ys: &[PairLabel],
    mut feature_rng: Option<&mut ChaCha8Rng>,
    depth: usize,
) -> TreeNode {
    let clones = ys.iter().filter(|&&y| y == PairLabel::Clone).count();
    if clones == 0 || clones == ys.len() || depth >= 64 {
        return TreeNode::Leaf(majority_label(ys));
    }

    let dim = xs[0].len();
    let features: Vec<usize> = match feature_rng.as_deref_mut() {
        Some(rng) => {
            let take = ((dim as f64).sqrt().floor() as usize).max(1);
            sample_indices(rng, dim, take)
        }
        None => (0..dim).collect(),
    };

    let parent = gini(clones, ys.len());
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    for &feature in &features {
        let mut values: Vec<f64> = xs.iter().map(|x| x[feature]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let threshold = (w[0] + w[1]) / 2.0;
            let mut left = (0usize, 0usize); // (clones, total)
            let mut right = (0usize, 0usize);
            for (x, y) in xs.iter().zip(ys) {
                let side = if x[feature] <= threshold {
                    &mut left
                } else {
                    &mut right
                };
                if *y == PairLabel::Clone {
                    side.0 += 1;
                }
                side.1 += 1;
            }
            let weighted = (left.1 as f64 * gini(left.0, left.1)
                + right.1 as f64 * gini(right.0, right.1))
                / ys.len() as f64;
            if weighted + 1e-12 < parent && best.map_or(true, |(b, _, _)| weighted < b) {
                best = Some((weighted, feature, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return TreeNode::Leaf(majority_label(ys));
    };

    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut rx = Vec::new();
    let mut ry = Vec::new();
    for (x, y) in xs.iter().zip(ys) {
        if x[feature] <= threshold {
            lx.push(*x);
            ly.push(*y);
        } else {
            rx.push(*x);
            ry.push(*y);
        }
    }
    let left = build_tree(&lx, &ly, feature_rng.as_deref_mut(), depth + 1);
    let right = build_tree(&rx, &ry, feature_rng, depth + 1);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize, take: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..take.min(n) {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(take.min(n));
    pool.sort_unstable();
    pool
}

fn train_forest(xs: &[&[f64]], ys: &[PairLabel], trees: usize, seed: u64) -> ClassifierModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let forest = (0..trees.max(1))
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let bx: Vec<&[f64]> = idx.iter().map(|&i| xs[i]).collect();
            let by: Vec<PairLabel> = idx.iter().map(|&i| ys[i]).collect();
            build_tree(&bx, &by, Some(&mut rng), 0)
        })
        .collect();
    ClassifierModel::Forest(forest)
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes
// ---------------------------------------------------------------------------

fn train_gnb(xs: &[&[f64]], ys: &[PairLabel], dim: usize) -> ClassifierModel {
    let n = xs.len() as f64;
    let mut means = [vec![0.0; dim], vec![0.0; dim]];
    let mut vars = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];

    for (x, y) in xs.iter().zip(ys) {
        let c = y.as_bit() as usize;
        counts[c] += 1;
        for (m, &v) in means[c].iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    for c in 0..2 {
        for m in &mut means[c] {
            *m /= counts[c] as f64;
        }
    }
    for (x, y) in xs.iter().zip(ys) {
        let c = y.as_bit() as usize;
        for ((var, &v), m) in vars[c].iter_mut().zip(x.iter()).zip(&means[c]) {
            *var += (v - m) * (v - m);
        }
    }
    // Variance floor proportional to the largest overall feature variance.
    let mut max_var = 0.0f64;
    for f in 0..dim {
        let mean_all: f64 = xs.iter().map(|x| x[f]).sum::<f64>() / n;
        let var_all: f64 = xs.iter().map(|x| (x[f] - mean_all).powi(2)).sum::<f64>() / n;
        max_var = max_var.max(var_all);
    }
    let eps = 1e-9 * max_var.max(1e-12);
    for c in 0..2 {
        for var in &mut vars[c] {
            *var = *var / counts[c] as f64 + eps;
        }
    }

    ClassifierModel::Gnb {
        log_priors: [
            (counts[0] as f64 / n).ln(),
            (counts[1] as f64 / n).ln(),
        ],
        means,
        vars,
    }
}

fn gnb_predict(log_priors: &[f64; 2], means: &[Vec<f64>; 2], vars: &[Vec<f64>; 2], x: &[f64]) -> PairLabel {
    let mut scores = [0.0f64; 2];
    for c in 0..2 {
        let mut s = log_priors[c];
        for ((&v, m), var) in x.iter().zip(&means[c]).zip(&vars[c]) {
            s += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m) * (v - m) / (2.0 * var);
        }
        scores[c] = s;
    }
    if scores[1] > scores[0] {
        PairLabel::Clone
    } else {
        PairLabel::Distinct
    }
}

// ---------------------------------------------------------------------------
// Linear SVM
// ---------------------------------------------------------------------------

/// Hinge loss with L2 regularization, optimized by sub-gradient descent over
/// the dataset in order: lambda 1e-3, 200 epochs, learning rate starting at
/// 0.1 with inverse decay lr_t = 0.1 / (1 + 0.1 * lambda * t) over the update
/// counter t.
fn train_svm(xs: &[&[f64]], ys: &[PairLabel], dim: usize) -> ClassifierModel {
    const LAMBDA: f64 = 1e-3;
    const LR0: f64 = 0.1;
    const EPOCHS: usize = 200;
    let mut weights = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut t = 0u64;

    for _ in 0..EPOCHS {
        for (x, y) in xs.iter().zip(ys) {
            let lr = LR0 / (1.0 + LR0 * LAMBDA * t as f64);
            t += 1;
            let y = if *y == PairLabel::Clone { 1.0 } else { -1.0 };
            let margin = y * (dot(&weights, x) + bias);
            if margin < 1.0 {
                for (w, &v) in weights.iter_mut().zip(x.iter()) {
                    *w -= lr * (LAMBDA * *w - y * v);
                }
                bias += lr * y;
            } else {
                for w in &mut weights {
                    *w -= lr * LAMBDA * *w;
                }
            }
        }
    }
    ClassifierModel::Svm { weights, bias }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
