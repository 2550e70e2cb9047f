//! Detection metrics over labeled page pairs and intra-pair model-quality
//! metrics against ground-truth clusterings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::parse_html;
use crate::saf::{
    compute_features, EmbeddingTypeSet, InferOptions, ModelSet, PairLabel, SafError,
    TrainedClassifier,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("row {row}: duplicate entry")]
    DuplicateRow { row: usize },
    #[error("clusterings cover different page universes")]
    UniverseMismatch,
    #[error(transparent)]
    Saf(#[from] SafError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Clusterings and intra-pair metrics
// ---------------------------------------------------------------------------

/// Total assignment of page ids to cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    assignments: BTreeMap<String, String>,
}

impl Clustering {
    pub fn new() -> Clustering {
        Clustering::default()
    }

    pub fn assign(&mut self, page: &str, cluster: &str) {
        self.assignments.insert(page.to_string(), cluster.to_string());
    }

    pub fn from_assignments<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Clustering {
        let mut c = Clustering::new();
        for (page, cluster) in pairs {
            c.assign(page, cluster);
        }
        c
    }

    pub fn pages(&self) -> impl Iterator<Item = &str> {
        self.assignments.keys().map(|s| s.as_str())
    }

    pub fn cluster_of(&self, page: &str) -> Option<&str> {
        self.assignments.get(page).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// All unordered page pairs sharing a cluster.
pub fn intra_pairs(clustering: &Clustering) -> BTreeSet<(String, String)> {
    let mut by_cluster: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (page, cluster) in &clustering.assignments {
        by_cluster.entry(cluster).or_default().push(page);
    }
    let mut pairs = BTreeSet::new();
    for members in by_cluster.values() {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (members[i], members[j]);
                let pair = if a <= b { (a, b) } else { (b, a) };
                pairs.insert((pair.0.to_string(), pair.1.to_string()));
            }
        }
    }
    pairs
}

/// Intra-pair precision/recall/F1 of a tool clustering against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelQualityReport {
    pub intra_precision: f64,
    pub intra_recall: f64,
    pub intra_f1: f64,
    pub gt_pairs: usize,
    pub tool_pairs: usize,
    pub common_pairs: usize,
}

impl ModelQualityReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<18} {:>10}\n", "metric", "value"));
        out.push_str(&format!("{:<18} {:>10.4}\n", "intra-precision", self.intra_precision));
        out.push_str(&format!("{:<18} {:>10.4}\n", "intra-recall", self.intra_recall));
        out.push_str(&format!("{:<18} {:>10.4}\n", "intra-f1", self.intra_f1));
        out.push_str(&format!("{:<18} {:>10}\n", "gt-pairs", self.gt_pairs));
        out.push_str(&format!("{:<18} {:>10}\n", "tool-pairs", self.tool_pairs));
        out.push_str(&format!("{:<18} {:>10}\n", "common-pairs", self.common_pairs));
        out
    }
}

/// p = |IP_gt intersect IP_tool| / |IP_tool|, r = same over |IP_gt|,
/// F1 = 2pr/(p+r). Degenerate denominators: an empty tool set scores
/// precision 1 against an empty ground truth and 0 otherwise; an empty
/// ground truth scores recall 1; F1 is 0 when p + r = 0.
pub fn model_quality(
    tool: &Clustering,
    gt: &Clustering,
) -> Result<ModelQualityReport, EvalError> {
    let tool_pages: BTreeSet<&str> = tool.pages().collect();
    let gt_pages: BTreeSet<&str> = gt.pages().collect();
    if tool_pages != gt_pages {
        return Err(EvalError::UniverseMismatch);
    }
    let ip_tool = intra_pairs(tool);
    let ip_gt = intra_pairs(gt);
    let common = ip_tool.intersection(&ip_gt).count();

    let precision = if ip_tool.is_empty() {
        if ip_gt.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        common as f64 / ip_tool.len() as f64
    };
    let recall = if ip_gt.is_empty() {
        1.0
    } else {
        common as f64 / ip_gt.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    Ok(ModelQualityReport {
        intra_precision: precision,
        intra_recall: recall,
        intra_f1: f1,
        gt_pairs: ip_gt.len(),
        tool_pairs: ip_tool.len(),
        common_pairs: common,
    })
}

// ---------------------------------------------------------------------------
// Detection metrics
// ---------------------------------------------------------------------------

/// Confusion counts and derived scores with clone/near-duplicate as the
/// positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl DetectionReport {
    /// Tallies (truth, predicted) outcomes. Degenerate denominators score 0.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (PairLabel, PairLabel)>) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
        for (truth, predicted) in outcomes {
            match (truth, predicted) {
                (PairLabel::Clone, PairLabel::Clone) => tp += 1,
                (PairLabel::Distinct, PairLabel::Clone) => fp += 1,
                (PairLabel::Distinct, PairLabel::Distinct) => tn += 1,
                (PairLabel::Clone, PairLabel::Distinct) => fn_ += 1,
            }
        }
        let total = tp + fp + tn + fn_;
        let accuracy = if total == 0 {
            0.0
        } else {
            (tp + tn) as f64 / total as f64
        };
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        DetectionReport {
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>10}\n", "metric", "value"));
        out.push_str(&format!("{:<12} {:>10.4}\n", "accuracy", self.accuracy));
        out.push_str(&format!("{:<12} {:>10.4}\n", "precision", self.precision));
        out.push_str(&format!("{:<12} {:>10.4}\n", "recall", self.recall));
        out.push_str(&format!("{:<12} {:>10.4}\n", "f1", self.f1));
        out.push_str(&format!(
            "{:<12} {:>10}\n",
            "tp/fp/tn/fn",
            format!("{}/{}/{}/{}", self.tp, self.fp, self.tn, self.fn_)
        ));
        out
    }
}

/// A labeled page pair: two HTML file paths and the ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub page_a: PathBuf,
    pub page_b: PathBuf,
    pub label: PairLabel,
}

/// Classifies every labeled pair with the embedding SAF and tallies the
/// confusion against the ground truth.
pub fn eval_detection(
    classifier: &TrainedClassifier,
    pairs: &[LabeledPair],
    models: &ModelSet,
    et: &EmbeddingTypeSet,
    opts: &InferOptions,
) -> Result<DetectionReport, EvalError> {
    let mut outcomes = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let html_a = std::fs::read_to_string(&pair.page_a)?;
        let html_b = std::fs::read_to_string(&pair.page_b)?;
        let features = compute_features(
            &parse_html(&html_a),
            &parse_html(&html_b),
            et,
            models,
            opts,
        )?;
        let predicted = classifier.classify(&features)?;
        outcomes.push((pair.label, predicted));
    }
    Ok(DetectionReport::from_outcomes(outcomes))
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

/// Reads a `page_a,page_b,label` CSV. Labels are 0 (distinct) or
/// 1 (clone/near-duplicate); repeated (page_a, page_b) rows are rejected.
pub fn load_labeled_pairs(path: &Path) -> Result<Vec<LabeledPair>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 1))?;
    expect_headers(&mut reader, &["page_a", "page_b", "label"])?;

    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is row 1
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() != 3 {
            return Err(EvalError::Schema {
                row,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let label = match &record[2] {
            "0" => PairLabel::Distinct,
            "1" => PairLabel::Clone,
            other => {
                return Err(EvalError::Schema {
                    row,
                    message: format!("label must be 0 or 1, found {other:?}"),
                })
            }
        };
        if !seen.insert((record[0].to_string(), record[1].to_string())) {
            return Err(EvalError::DuplicateRow { row });
        }
        pairs.push(LabeledPair {
            page_a: PathBuf::from(&record[0]),
            page_b: PathBuf::from(&record[1]),
            label,
        });
    }
    Ok(pairs)
}

/// Reads a `page_id,cluster_id` CSV; repeated page ids are rejected.
pub fn load_clustering(path: &Path) -> Result<Clustering, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 1))?;
    expect_headers(&mut reader, &["page_id", "cluster_id"])?;

    let mut clustering = Clustering::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() != 2 {
            return Err(EvalError::Schema {
                row,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        if record[0].is_empty() || record[1].is_empty() {
            return Err(EvalError::Schema {
                row,
                message: "empty page or cluster id".into(),
            });
        }
        if clustering.cluster_of(&record[0]).is_some() {
            return Err(EvalError::DuplicateRow { row });
        }
        clustering.assign(&record[0], &record[1]);
    }
    Ok(clustering)
}

fn expect_headers(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), EvalError> {
    let headers = reader.headers().map_err(|e| csv_error(e, 1))?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(EvalError::Schema {
            row: 1,
            message: format!("expected header {expected:?}, found {found:?}"),
        });
    }
    Ok(())
}

fn csv_error(e: csv::Error, row: usize) -> EvalError {
    EvalError::Schema {
        row,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clustering(spec: &[(&str, &str)]) -> Clustering {
        Clustering::from_assignments(spec.iter().copied())
    }

    #[test]
    fn intra_pairs_of_worked_example_ground_truth() {
        let gt = clustering(&[
            ("p1", "c1"),
            ("p2", "c1"),
            ("p3", "c2"),
            ("p4", "c3"),
            ("p5", "c3"),
            ("p6", "c3"),
        ]);
        let pairs = intra_pairs(&gt);
        let expected: BTreeSet<(String, String)> = [
            ("p1", "p2"),
            ("p4", "p5"),
            ("p4", "p6"),
            ("p5", "p6"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(pairs, expected);
    }

    #[test]
    fn intra_pairs_edge_cases() {
        let singletons = clustering(&[("a", "1"), ("b", "2"), ("c", "3")]);
        assert!(intra_pairs(&singletons).is_empty());

        let one_cluster = clustering(&[("a", "x"), ("b", "x"), ("c", "x"), ("d", "x")]);
        assert_eq!(intra_pairs(&one_cluster).len(), 4 * 3 / 2);
    }

    #[test]
    fn worked_example_scores() {
        let gt = clustering(&[
            ("p1", "c1"),
            ("p2", "c1"),
            ("p3", "c2"),
            ("p4", "c3"),
            ("p5", "c3"),
            ("p6", "c3"),
        ]);
        let tool = clustering(&[
            ("p1", "a"),
            ("p3", "a"),
            ("p2", "b"),
            ("p4", "c"),
            ("p5", "c"),
            ("p6", "d"),
        ]);
        let report = model_quality(&tool, &gt).unwrap();
        assert!((report.intra_precision - 0.5).abs() < 1e-9);
        assert!((report.intra_recall - 0.25).abs() < 1e-9);
        assert!((report.intra_f1 - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn identical_clusterings_score_one() {
        let gt = clustering(&[("a", "1"), ("b", "1"), ("c", "2")]);
        let report = model_quality(&gt, &gt).unwrap();
        assert_eq!(report.intra_precision, 1.0);
        assert_eq!(report.intra_recall, 1.0);
        assert_eq!(report.intra_f1, 1.0);
    }

    #[test]
    fn degenerate_conventions() {
        let gt = clustering(&[("a", "1"), ("b", "1"), ("c", "1")]);
        let tool = clustering(&[("a", "1"), ("b", "2"), ("c", "3")]);
        let report = model_quality(&tool, &gt).unwrap();
        assert_eq!(report.intra_precision, 0.0);
        assert_eq!(report.intra_recall, 0.0);
        assert_eq!(report.intra_f1, 0.0);

        // Both sides free of intra-pairs: vacuously perfect.
        let report = model_quality(&tool, &tool).unwrap();
        assert_eq!(report.intra_precision, 1.0);
        assert_eq!(report.intra_recall, 1.0);
    }

    #[test]
    fn cluster_ids_are_arbitrary_labels() {
        let gt = clustering(&[("a", "x"), ("b", "x"), ("c", "y")]);
        let relabeled = clustering(&[("a", "blue"), ("b", "blue"), ("c", "red")]);
        let tool = clustering(&[("a", "1"), ("b", "2"), ("c", "2")]);
        let r1 = model_quality(&tool, &gt).unwrap();
        let r2 = model_quality(&tool, &relabeled).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn universe_mismatch_is_rejected() {
        let gt = clustering(&[("a", "1")]);
        let tool = clustering(&[("b", "1")]);
        assert!(matches!(
            model_quality(&tool, &gt),
            Err(EvalError::UniverseMismatch)
        ));
    }

    #[test]
    fn detection_report_conventions() {
        use PairLabel::{Clone, Distinct};
        // Perfect predictions.
        let report = DetectionReport::from_outcomes([(Clone, Clone), (Distinct, Distinct)]);
        assert_eq!(
            (report.accuracy, report.precision, report.recall, report.f1),
            (1.0, 1.0, 1.0, 1.0)
        );

        // All-positive predictions on a balanced 10-pair set.
        let outcomes: Vec<_> = (0..5)
            .map(|_| (Clone, Clone))
            .chain((0..5).map(|_| (Distinct, Clone)))
            .collect();
        let report = DetectionReport::from_outcomes(outcomes);
        assert_eq!(report.precision, 0.5);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.accuracy, 0.5);
        assert!((report.f1 - 2.0 / 3.0).abs() < 1e-12);

        // No positives predicted although some exist.
        let report = DetectionReport::from_outcomes([(Clone, Distinct), (Distinct, Distinct)]);
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn confusion_counts_sum_to_dataset_size() {
        use PairLabel::{Clone, Distinct};
        let outcomes = vec![
            (Clone, Clone),
            (Clone, Distinct),
            (Distinct, Clone),
            (Distinct, Distinct),
            (Clone, Clone),
        ];
        let report = DetectionReport::from_outcomes(outcomes.clone());
        assert_eq!(report.total(), outcomes.len());
    }

    fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn labeled_pairs_loading() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_csv(
            &dir,
            "ok.csv",
            "page_a,page_b,label\na.html,b.html,1\na.html,c.html,0\nb.html,c.html,0\n",
        );
        let pairs = load_labeled_pairs(&ok).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].label, PairLabel::Clone);

        let bad_label = write_csv(&dir, "bad.csv", "page_a,page_b,label\na,b,2\n");
        match load_labeled_pairs(&bad_label) {
            Err(EvalError::Schema { row: 2, .. }) => {}
            other => panic!("expected schema error at row 2, got {other:?}"),
        }

        let dup = write_csv(&dir, "dup.csv", "page_a,page_b,label\na,b,1\na,b,0\n");
        match load_labeled_pairs(&dup) {
            Err(EvalError::DuplicateRow { row: 3 }) => {}
            other => panic!("expected duplicate row error, got {other:?}"),
        }
    }

    #[test]
    fn clustering_loading() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_csv(&dir, "c.csv", "page_id,cluster_id\np1,c1\np2,c1\n");
        let clustering = load_clustering(&ok).unwrap();
        assert_eq!(clustering.len(), 2);
        assert_eq!(clustering.cluster_of("p1"), Some("c1"));

        let dup = write_csv(&dir, "d.csv", "page_id,cluster_id\np1,c1\np1,c2\n");
        assert!(matches!(
            load_clustering(&dup),
            Err(EvalError::DuplicateRow { row: 3 })
        ));

        let bad_header = write_csv(&dir, "h.csv", "page,cluster\np1,c1\n");
        assert!(matches!(
            load_clustering(&bad_header),
            Err(EvalError::Schema { row: 1, .. })
        ));
    }
}
