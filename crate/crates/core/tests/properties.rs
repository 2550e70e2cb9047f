//! Property tests for the spec-level invariants.

use proptest::prelude::*;

use statefold::crawl::{CrawlModel, Event, LogEntry};
use statefold::dom::{extract_tokens, parse_html, serialize, EmbeddingKind};
use statefold::embedding::cosine_of;
use statefold::eval::{intra_pairs, model_quality, Clustering, DetectionReport};
use statefold::saf::{
    cosine_similarity, train_classifier, ClassifierKind, EmbeddingTypeSet, PairLabel,
    SimilarityFeatures,
};

// ---------------------------------------------------------------------------
// DOM extraction
// ---------------------------------------------------------------------------

fn html_word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "item", "buy", "now", "review", "9.99", "detail", "page", "alpha", "beta",
    ])
    .prop_map(str::to_string)
}

fn html_fragment(depth: u32) -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        html_word(),
        html_word().prop_map(|w| format!("<img src=\"{w}.png\"/>")),
        Just("<!-- note -->".to_string()),
        Just("<script>var x = 1;</script>".to_string()),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let inner = prop::collection::vec(html_fragment(depth - 1), 0..4);
    prop_oneof![
        leaf,
        (
            prop::sample::select(vec!["div", "span", "ul", "table", "h1", "a"]),
            inner
        )
            .prop_map(|(tag, children)| format!("<{tag}>{}</{tag}>", children.join(" "))),
    ]
    .boxed()
}

proptest! {
    #[test]
    fn tokens_are_lowercase_and_whitespace_free(input in ".*") {
        let tree = parse_html(&input);
        for kind in EmbeddingKind::ALL {
            for token in extract_tokens(&tree.root, kind).tokens {
                prop_assert!(!token.is_empty());
                prop_assert!(!token.chars().any(char::is_whitespace), "token {token:?}");
                prop_assert_eq!(token.to_lowercase(), token.clone());
            }
        }
    }

    #[test]
    fn parse_serialize_parse_preserves_tokens(input in ".*") {
        let first = parse_html(&input);
        let second = parse_html(&serialize(&first));
        for kind in EmbeddingKind::ALL {
            prop_assert_eq!(
                extract_tokens(&first.root, kind).tokens,
                extract_tokens(&second.root, kind).tokens
            );
        }
    }

    #[test]
    fn content_and_tags_interleave_consistently(body in html_fragment(3)) {
        let tree = parse_html(&format!("<html><body>{body}</body></html>"));
        let tags = extract_tokens(&tree.root, EmbeddingKind::Tags).tokens;
        let content = extract_tokens(&tree.root, EmbeddingKind::Content).tokens;
        let both = extract_tokens(&tree.root, EmbeddingKind::ContentTags).tokens;
        prop_assert_eq!(both.len(), tags.len() + content.len());
        prop_assert!(is_subsequence(&tags, &both));
        prop_assert!(is_subsequence(&content, &both));
    }

    #[test]
    fn script_style_comment_subtrees_contribute_nothing(word in html_word()) {
        let html = format!(
            "<div><script>{word} secret</script><style>.x {{}}</style><!-- {word} --><p>{word}</p></div>"
        );
        let tree = parse_html(&html);
        let content = extract_tokens(&tree.root, EmbeddingKind::Content).tokens;
        prop_assert_eq!(content, vec![word]);
    }
}

fn is_subsequence(needle: &[String], haystack: &[String]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

// ---------------------------------------------------------------------------
// Cosine similarity
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        a in prop::collection::vec(-10.0f32..10.0, 8),
        b in prop::collection::vec(-10.0f32..10.0, 8),
        // Power-of-two scales stay exact in f32, isolating the mathematical
        // invariance from storage rounding.
        scale in prop::sample::select(vec![0.125f32, 0.25, 0.5, 2.0, 4.0, 16.0]),
    ) {
        let ab = cosine_of(&a, &b);
        let ba = cosine_of(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-9);
        let scaled: Vec<f32> = a.iter().map(|&v| v * scale).collect();
        prop_assert!((cosine_of(&scaled, &b) - ab).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

fn et1() -> EmbeddingTypeSet {
    EmbeddingTypeSet::single(EmbeddingKind::ContentTags)
}

fn dataset_1d(points: &[(f64, bool)]) -> Vec<(SimilarityFeatures, PairLabel)> {
    points
        .iter()
        .map(|&(x, clone)| {
            (
                SimilarityFeatures::new(et1(), vec![x]),
                if clone {
                    PairLabel::Clone
                } else {
                    PairLabel::Distinct
                },
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threshold_training_ignores_dataset_order(
        mut points in prop::collection::vec((-1.0f64..1.0, any::<bool>()), 2..20),
        seed in any::<u64>(),
    ) {
        // Ensure both classes are present so training is not degenerate.
        points.push((0.99, true));
        points.push((-0.99, false));
        let forward = train_classifier(ClassifierKind::Threshold, &dataset_1d(&points)).unwrap();
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut rng);
        let reordered = train_classifier(ClassifierKind::Threshold, &dataset_1d(&shuffled)).unwrap();
        prop_assert_eq!(forward, reordered);
    }

    #[test]
    fn knn1_memorizes_distinct_training_points(
        values in prop::collection::btree_set(-100i32..100, 2..20),
        labels_seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(labels_seed);
        let mut points: Vec<(f64, bool)> = values
            .into_iter()
            .map(|v| (v as f64 / 100.0, rng.random::<bool>()))
            .collect();
        points[0].1 = true;
        let last = points.len() - 1;
        points[last].1 = false;
        let ds = dataset_1d(&points);
        let knn = train_classifier(ClassifierKind::KNearest { k: 1 }, &ds).unwrap();
        for (features, label) in &ds {
            prop_assert_eq!(knn.classify(features).unwrap(), *label);
        }
    }

    #[test]
    fn classify_is_pure(x in -1.0f64..1.0) {
        let ds = dataset_1d(&[(-0.5, false), (-0.4, false), (0.6, true), (0.7, true)]);
        let c = train_classifier(ClassifierKind::MajorityEnsemble, &ds).unwrap();
        let f = SimilarityFeatures::new(et1(), vec![x]);
        let first = c.classify(&f).unwrap();
        for _ in 0..5 {
            prop_assert_eq!(c.classify(&f).unwrap(), first);
        }
    }
}

// ---------------------------------------------------------------------------
// Clustering metrics
// ---------------------------------------------------------------------------

/// Random partition of n pages encoded as a restricted-growth string.
fn partition(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n, n)
}

fn clustering_from(assignment: &[usize]) -> Clustering {
    let mut c = Clustering::new();
    for (i, &cluster) in assignment.iter().enumerate() {
        c.assign(&format!("p{i}"), &format!("c{cluster}"));
    }
    c
}

proptest! {
    #[test]
    fn intra_pairs_matches_brute_force_double_loop(assignment in partition(50)) {
        let clustering = clustering_from(&assignment);
        let fast = intra_pairs(&clustering);
        // Brute force: all unordered pairs sharing a cluster id.
        let mut brute = std::collections::BTreeSet::new();
        for i in 0..assignment.len() {
            for j in 0..assignment.len() {
                if i < j && assignment[i] == assignment[j] {
                    let (a, b) = (format!("p{i}"), format!("p{j}"));
                    brute.insert(if a <= b { (a, b) } else { (b, a) });
                }
            }
        }
        prop_assert_eq!(fast, brute);
    }

    #[test]
    fn model_quality_is_invariant_under_cluster_relabeling(
        tool in partition(8),
        gt in partition(8),
        offset in 1usize..50,
    ) {
        let relabeled: Vec<usize> = gt.iter().map(|&c| c + offset).collect();
        let a = model_quality(&clustering_from(&tool), &clustering_from(&gt)).unwrap();
        let b = model_quality(&clustering_from(&tool), &clustering_from(&relabeled)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn merging_ground_truth_clusters_never_raises_recall_when_overlap_is_fixed(
        tool in partition(6),
        gt in partition(6),
        merge in (0usize..6, 0usize..6),
    ) {
        let tool_c = clustering_from(&tool);
        let gt_c = clustering_from(&gt);
        let before = model_quality(&tool_c, &gt_c).unwrap();

        // Merge the clusters of two pages in the ground truth.
        let mut merged = gt.clone();
        let (a, b) = merge;
        let target = merged[a];
        let source = merged[b];
        for c in merged.iter_mut() {
            if *c == source {
                *c = target;
            }
        }
        let after = model_quality(&tool_c, &clustering_from(&merged)).unwrap();
        if after.common_pairs == before.common_pairs && after.gt_pairs > before.gt_pairs {
            prop_assert!(after.intra_recall <= before.intra_recall + 1e-12);
        }
    }

    #[test]
    fn detection_counts_sum_to_dataset_size(
        outcomes in prop::collection::vec((any::<bool>(), any::<bool>()), 0..200)
    ) {
        let n = outcomes.len();
        let report = DetectionReport::from_outcomes(outcomes.into_iter().map(|(t, p)| {
            let lbl = |b| if b { PairLabel::Clone } else { PairLabel::Distinct };
            (lbl(t), lbl(p))
        }));
        prop_assert_eq!(report.total(), n);
    }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Random stretch-structured event log over a deterministic pseudo-app: the
/// state reached after a prefix of events is a function of the prefix, the
/// way a deterministic driver behaves.
fn random_log() -> impl Strategy<Value = Vec<LogEntry>> {
    let stretch = prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..5);
    prop::collection::vec(stretch, 1..6).prop_map(|stretches| {
        let mut log = Vec::new();
        for events in stretches {
            let mut prefix_hash = 0x9e3779b97f4a7c15u64;
            let mut from = 0usize;
            for (i, label) in events.iter().enumerate() {
                for byte in label.bytes() {
                    prefix_hash = prefix_hash.wrapping_mul(31).wrapping_add(byte as u64);
                }
                let to = 1 + (prefix_hash % 7) as usize;
                log.push(LogEntry {
                    from,
                    event: Event::click(vec![0], label),
                    to,
                    was_new_state: prefix_hash % 3 == 0,
                    reset_before: i == 0,
                });
                from = to;
            }
        }
        log
    })
}

fn model_with_log(log: Vec<LogEntry>) -> CrawlModel {
    let max_state = log.iter().map(|e| e.from.max(e.to)).max().unwrap_or(0);
    let states: Vec<serde_json::Value> = (0..=max_state)
        .map(|id| {
            serde_json::json!({
                "id": id, "discovery_index": id, "visited": true, "html": ""
            })
        })
        .collect();
    CrawlModel::from_json(
        &serde_json::json!({
            "version": 1, "name": "prop", "index_id": 0,
            "states": states, "edges": [], "event_log": log
        })
        .to_string(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn segmentation_is_deterministic_and_concatenation_preserving(log in random_log()) {
        let model = model_with_log(log.clone());
        let suite = statefold::testgen::segment(&model).unwrap();
        let again = statefold::testgen::segment(&model).unwrap();
        prop_assert_eq!(&suite, &again);

        // Independent split of the log at reset markers, first occurrence of
        // each event sequence kept.
        let mut stretches: Vec<Vec<&LogEntry>> = Vec::new();
        for entry in &log {
            if entry.reset_before || stretches.is_empty() {
                stretches.push(Vec::new());
            }
            stretches.last_mut().unwrap().push(entry);
        }
        let mut kept: Vec<Vec<&Event>> = Vec::new();
        for stretch in &stretches {
            let events: Vec<&Event> = stretch.iter().map(|e| &e.event).collect();
            if !kept.contains(&events) {
                kept.push(events);
            }
        }
        let expected: Vec<&Event> = kept.into_iter().flatten().collect();
        let got: Vec<&Event> = suite
            .paths
            .iter()
            .flat_map(|p| p.steps.iter().map(|s| &s.event))
            .collect();
        prop_assert_eq!(got, expected);

        // Every state admitted as new is an expected state of some path.
        for entry in &log {
            if entry.was_new_state {
                prop_assert!(suite
                    .paths
                    .iter()
                    .any(|p| p.steps.iter().any(|s| s.expected_state == entry.to)));
            }
        }
    }
}
