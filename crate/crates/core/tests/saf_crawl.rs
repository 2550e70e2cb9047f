//! End-to-end: train an embedding model on the fixture's pages, wrap it in a
//! fixed-threshold classifier, and crawl. Near-duplicate captures must be
//! rejected while genuinely new pages are admitted.

use std::path::PathBuf;

use statefold::crawl::{
    crawl, AppDriver, CrawlBudget, EmbeddingSaf, FixtureDriver, Strategy,
};
use statefold::dom::{extract_tokens, parse_html, EmbeddingKind, TokenSequence};
use statefold::embedding::{infer_vector, train_dbow, Doc2VecModel, Hyperparams};
use statefold::saf::{
    compute_features, cosine_similarity, page_seed, EmbeddingTypeSet, InferOptions, ModelSet,
    PairLabel, TrainedClassifier,
};

fn scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/ecommerce.toml")
}

/// Collects one rendering of every page variant by walking the app.
fn collect_pages() -> Vec<(String, String)> {
    let mut driver = FixtureDriver::from_path(&scenario_path()).unwrap();
    let mut pages = Vec::new();
    let fire = |driver: &mut FixtureDriver, label: &str| {
        let event = driver
            .candidate_events()
            .unwrap()
            .into_iter()
            .find(|e| e.locator.label == label)
            .unwrap_or_else(|| panic!("no candidate {label:?}"));
        driver.fire(&event).unwrap()
    };
    pages.push(("catalog".into(), driver.reset().unwrap()));
    pages.push(("detail_r0".into(), fire(&mut driver, "view item a")));
    pages.push(("detail_r1".into(), fire(&mut driver, "+ add review")));
    driver.reset().unwrap();
    pages.push(("catalog_price".into(), fire(&mut driver, "sort by price")));
    pages.push(("catalog_name".into(), fire(&mut driver, "sort by name")));
    pages.push(("catalog_rating".into(), fire(&mut driver, "sort by rating")));
    pages.push(("buy".into(), fire(&mut driver, "proceed to checkout")));
    pages
}

fn tokens_of(html: &str, kind: EmbeddingKind) -> TokenSequence {
    extract_tokens(&parse_html(html).root, kind)
}

/// Trains the content+tags model on the collected fixture pages.
fn fixture_model(pages: &[(String, String)]) -> Doc2VecModel {
    let corpus: Vec<TokenSequence> = pages
        .iter()
        .map(|(_, html)| tokens_of(html, EmbeddingKind::ContentTags))
        .collect();
    let hyper = Hyperparams {
        min_count: 1,
        seed: 7,
        ..Hyperparams::default()
    };
    train_dbow(&corpus, &hyper, 1).unwrap().model
}

fn embed(model: &Doc2VecModel, html: &str, opts: &InferOptions) -> statefold::embedding::Embedding {
    let tokens = tokens_of(html, EmbeddingKind::ContentTags);
    let seed = page_seed(opts.session_seed, &tokens);
    infer_vector(model, &tokens, opts.epochs, seed).unwrap().embedding
}

#[test]
fn threshold_saf_rejects_replicas_and_reaches_buy() {
    let pages = collect_pages();
    let model = fixture_model(&pages);
    let opts = InferOptions {
        epochs: 50,
        session_seed: 42,
    };

    // Precondition from the fixture: a review-mutated detail page embeds
    // at least 0.8 close to the base detail page, sorted catalogs embed
    // close to the catalog, and cross-class pairs stay far apart.
    let html = |name: &str| &pages.iter().find(|(n, _)| n == name).unwrap().1;
    let sim = |a: &str, b: &str| {
        cosine_similarity(
            &embed(&model, html(a), &opts),
            &embed(&model, html(b), &opts),
        )
        .unwrap()
    };
    assert!(sim("detail_r0", "detail_r1") >= 0.8);
    assert!(sim("catalog", "catalog_price") >= 0.8);
    assert!(sim("catalog", "catalog_rating") >= 0.8);
    assert!(sim("catalog", "detail_r0") < 0.8);
    assert!(sim("buy", "catalog") < 0.8);
    assert!(sim("buy", "detail_r0") < 0.8);

    let mut models = ModelSet::new();
    models.insert(model);
    let et = EmbeddingTypeSet::single(EmbeddingKind::ContentTags);
    let saf = EmbeddingSaf::new(models, TrainedClassifier::threshold_at(0.8, et), opts).unwrap();

    let mut driver = FixtureDriver::from_path(&scenario_path()).unwrap();
    let outcome = crawl(
        &mut driver,
        &saf,
        &CrawlBudget::events(50),
        Strategy::DepthFirst,
        "ecommerce-threshold",
    )
    .unwrap();
    assert!(outcome.error.is_none());

    let model = outcome.model;
    assert_eq!(
        model.states.len(),
        3,
        "threshold SAF should keep exactly catalog, detail, buy"
    );
    assert!(
        model.states.iter().any(|s| s.html.contains("<!-- logical: buy -->")),
        "buy page must be reached once replicas are rejected"
    );
    // Admission soundness: re-checking every admitted pair in admission
    // order still says distinct.
    for later in &model.states {
        for earlier in &model.states[..later.id] {
            let features = statefold::saf::features_from_embeddings(
                &later.embeddings,
                &earlier.embeddings,
                saf.feature_set(),
            )
            .unwrap();
            assert_eq!(
                TrainedClassifier::threshold_at(
                    0.8,
                    EmbeddingTypeSet::single(EmbeddingKind::ContentTags)
                )
                .classify(&features)
                .unwrap(),
                PairLabel::Distinct
            );
        }
    }
}

#[test]
fn identical_pages_produce_all_ones_features() {
    let pages = collect_pages();
    let model = fixture_model(&pages);
    let mut models = ModelSet::new();
    models.insert(model);
    let opts = InferOptions {
        epochs: 50,
        session_seed: 9,
    };
    let tree = parse_html(&pages[0].1);
    let et = EmbeddingTypeSet::single(EmbeddingKind::ContentTags);
    let features = compute_features(&tree, &tree, &et, &models, &opts).unwrap();
    assert_eq!(features.scores.len(), 1);
    assert!((features.scores[0] - 1.0).abs() < 1e-6);
}

#[test]
fn all_oov_page_scores_zero_against_everything() {
    // Content embeddings only, so the synthesized html/body tags do not
    // count as known tokens.
    let pages = collect_pages();
    let corpus: Vec<TokenSequence> = pages
        .iter()
        .map(|(_, html)| tokens_of(html, EmbeddingKind::Content))
        .collect();
    let hyper = Hyperparams {
        min_count: 1,
        seed: 7,
        ..Hyperparams::default()
    };
    let model = train_dbow(&corpus, &hyper, 1).unwrap().model;
    let mut models = ModelSet::new();
    models.insert(model);
    let opts = InferOptions::default();
    let et = EmbeddingTypeSet::single(EmbeddingKind::Content);
    let oov = parse_html("<p>xyzzy plugh</p>");
    let catalog = parse_html(&pages[0].1);
    let features = compute_features(&oov, &catalog, &et, &models, &opts).unwrap();
    assert_eq!(features.scores[0], 0.0);
}
