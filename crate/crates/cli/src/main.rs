//! Command-line entry point: tokenization, embedding training, SAF
//! training, crawling, test generation, and evaluation.
//!
//! Exit codes: 0 success, 2 invalid input or flags, 1 runtime failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use statefold::crawl::{
    crawl, AlwaysDistinctSaf, AppDriver, CrawlBudget, CrawlModel, EmbeddingSaf, FixtureDriver,
    StateAbstraction, StaticSiteDriver, Strategy,
};
use statefold::dom::{extract_tokens, parse_html, EmbeddingKind, TokenSequence};
use statefold::embedding::{train_dbow, Doc2VecModel, Hyperparams};
use statefold::eval::{
    eval_detection, load_clustering, load_labeled_pairs, model_quality, DetectionReport,
};
use statefold::saf::{
    compute_features, train_classifier, ClassifierKind, EmbeddingTypeSet, InferOptions, ModelSet,
    TrainedClassifier,
};
use statefold::testgen::segment;

use config::Config;

#[derive(Parser)]
#[command(name = "statefold", version, about = "Near-duplicate web page detection and crawl model inference")]
struct Cli {
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the token sequence of an HTML file, one token per line.
    Tokenize {
        /// HTML file to tokenize.
        html_path: PathBuf,
        /// Representation: content, tags, or content+tags.
        #[arg(long, default_value = "content+tags")]
        kind: String,
    },
    /// Train a document-embedding model on a directory of HTML files.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train a pair classifier on a labeled-pairs CSV.
    TrainSaf(TrainSafArgs),
    /// Explore an app and write the inferred model as JSON.
    Crawl(CrawlArgs),
    /// Segment a crawl model into test paths and export them.
    GenTests(GenTestsArgs),
    /// Score a classifier against a labeled-pairs CSV.
    EvalPairs(EvalPairsArgs),
    /// Compare a tool clustering against a ground-truth clustering.
    EvalModel(EvalModelArgs),
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    negative_samples: Option<usize>,
    #[arg(long)]
    initial_lr: Option<f64>,
    #[arg(long)]
    final_lr: Option<f64>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl HyperArgs {
    fn resolve(&self, cfg: &Config) -> Result<Hyperparams, CliError> {
        let d = Hyperparams::default();
        Ok(Hyperparams {
            dim: cfg.resolve(self.dim, "dim", d.dim).map_err(CliError::Usage)?,
            epochs: cfg
                .resolve(self.epochs, "epochs", d.epochs)
                .map_err(CliError::Usage)?,
            negative_samples: cfg
                .resolve(self.negative_samples, "negative_samples", d.negative_samples)
                .map_err(CliError::Usage)?,
            initial_lr: cfg
                .resolve(self.initial_lr, "initial_lr", d.initial_lr)
                .map_err(CliError::Usage)?,
            final_lr: cfg
                .resolve(self.final_lr, "final_lr", d.final_lr)
                .map_err(CliError::Usage)?,
            min_count: cfg
                .resolve(self.min_count, "min_count", d.min_count)
                .map_err(CliError::Usage)?,
            seed: cfg.resolve(self.seed, "seed", d.seed).map_err(CliError::Usage)?,
        })
    }
}

#[derive(Args)]
struct ModelPathArgs {
    /// Trained model for the content representation.
    #[arg(long)]
    model_content: Option<PathBuf>,
    /// Trained model for the tags representation.
    #[arg(long)]
    model_tags: Option<PathBuf>,
    /// Trained model for the content+tags representation.
    #[arg(long)]
    model_content_tags: Option<PathBuf>,
}

impl ModelPathArgs {
    fn load(&self, et: &EmbeddingTypeSet) -> Result<ModelSet, CliError> {
        let mut models = ModelSet::new();
        for &kind in et.kinds() {
            let path = match kind {
                EmbeddingKind::Content => &self.model_content,
                EmbeddingKind::Tags => &self.model_tags,
                EmbeddingKind::ContentTags => &self.model_content_tags,
            };
            let Some(path) = path else {
                return Err(CliError::Usage(format!(
                    "embedding type set includes {kind} but no --model-{} was given",
                    match kind {
                        EmbeddingKind::Content => "content",
                        EmbeddingKind::Tags => "tags",
                        EmbeddingKind::ContentTags => "content-tags",
                    }
                )));
            };
            let model = Doc2VecModel::load(path)
                .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", path.display())))?;
            if model.kind != kind {
                return Err(CliError::Usage(format!(
                    "model {} was trained for {}, expected {kind}",
                    path.display(),
                    model.kind
                )));
            }
            models.insert(model);
        }
        Ok(models)
    }
}

#[derive(Args)]
struct InferArgs {
    /// Inference epochs per page embedding.
    #[arg(long)]
    infer_epochs: Option<usize>,
    /// Session seed for reproducible page embeddings.
    #[arg(long)]
    session_seed: Option<u64>,
}

impl InferArgs {
    fn resolve(&self, cfg: &Config) -> Result<InferOptions, CliError> {
        let d = InferOptions::default();
        Ok(InferOptions {
            epochs: cfg
                .resolve(self.infer_epochs, "infer_epochs", d.epochs)
                .map_err(CliError::Usage)?,
            session_seed: cfg
                .resolve(self.session_seed, "session_seed", d.session_seed)
                .map_err(CliError::Usage)?,
        })
    }
}

#[derive(Args)]
struct TrainEmbeddingsArgs {
    /// Directory of *.html files; sorted paths fix the document ids.
    corpus_dir: PathBuf,
    /// Representation: content, tags, or content+tags.
    #[arg(long, default_value = "content+tags")]
    kind: String,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Training worker threads; values above 1 trade bit-reproducibility
    /// for speed.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct TrainSafArgs {
    /// Labeled pairs CSV: page_a,page_b,label.
    #[arg(long)]
    pairs: PathBuf,
    /// Classifier kind: threshold, knn, decision-tree, naive-bayes, svm,
    /// random-forest, or ensemble.
    #[arg(long)]
    classifier: Option<String>,
    /// Embedding type set, comma separated.
    #[arg(long)]
    et: Option<String>,
    /// Output classifier bundle.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    models: ModelPathArgs,
    #[command(flatten)]
    infer: InferArgs,
}

#[derive(Args)]
struct CrawlArgs {
    /// Fixture scenario file to explore.
    #[arg(long, conflicts_with = "site_dir")]
    scenario: Option<PathBuf>,
    /// Static site directory to explore (starts at index.html).
    #[arg(long)]
    site_dir: Option<PathBuf>,
    /// State abstraction: oracle, always-distinct, threshold=<cut>, or
    /// classifier=<bundle path>.
    #[arg(long, default_value = "oracle")]
    saf: String,
    /// Exploration budget in fired candidate events.
    #[arg(long)]
    max_events: Option<u64>,
    /// Exploration budget in seconds.
    #[arg(long)]
    max_seconds: Option<f64>,
    /// Output model JSON file.
    #[arg(long)]
    out: PathBuf,
    /// Model name recorded in the output (defaults to the scenario name or
    /// the site directory name).
    #[arg(long)]
    name: Option<String>,
    /// Embedding type set for threshold SAFs.
    #[arg(long)]
    et: Option<String>,
    #[command(flatten)]
    models: ModelPathArgs,
    #[command(flatten)]
    infer: InferArgs,
}

#[derive(Args)]
struct GenTestsArgs {
    /// Crawl model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output format: json or scripts.
    #[arg(long, default_value = "json")]
    format: String,
    /// Output file (json) or directory (scripts).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalPairsArgs {
    /// Labeled pairs CSV: page_a,page_b,label.
    #[arg(long)]
    pairs: PathBuf,
    /// Classifier bundle to evaluate.
    #[arg(long, conflicts_with = "threshold")]
    classifier_file: Option<PathBuf>,
    /// Evaluate a fixed-cut threshold classifier instead of a bundle.
    #[arg(long)]
    threshold: Option<f64>,
    /// Embedding type set for --threshold.
    #[arg(long)]
    et: Option<String>,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    models: ModelPathArgs,
    #[command(flatten)]
    infer: InferArgs,
}

#[derive(Args)]
struct EvalModelArgs {
    /// Tool clustering CSV: page_id,cluster_id.
    #[arg(long)]
    tool: PathBuf,
    /// Ground-truth clustering CSV: page_id,cluster_id.
    #[arg(long)]
    gt: PathBuf,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
}

enum CliError {
    /// Invalid input or flags: exit 2.
    Usage(String),
    /// Failure while doing the work: exit 1.
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(cfg) => cfg,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    match run(cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, cfg: &Config) -> Result<(), CliError> {
    match command {
        Command::Tokenize { html_path, kind } => cmd_tokenize(&html_path, &kind),
        Command::TrainEmbeddings(args) => cmd_train_embeddings(args, cfg),
        Command::TrainSaf(args) => cmd_train_saf(args, cfg),
        Command::Crawl(args) => cmd_crawl(args, cfg),
        Command::GenTests(args) => cmd_gen_tests(args),
        Command::EvalPairs(args) => cmd_eval_pairs(args, cfg),
        Command::EvalModel(args) => cmd_eval_model(args),
    }
}

fn parse_kind(name: &str) -> Result<EmbeddingKind, CliError> {
    EmbeddingKind::parse(name)
        .ok_or_else(|| CliError::Usage(format!("unknown representation kind {name:?}")))
}

fn resolve_et(flag: &Option<String>, cfg: &Config) -> Result<EmbeddingTypeSet, CliError> {
    let spec = flag
        .clone()
        .or_else(|| cfg.get("et").map(str::to_string))
        .unwrap_or_else(|| "content+tags".to_string());
    EmbeddingTypeSet::parse(&spec).map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_tokenize(html_path: &Path, kind: &str) -> Result<(), CliError> {
    let kind = parse_kind(kind)?;
    let html = std::fs::read_to_string(html_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", html_path.display())))?;
    let tree = parse_html(&html);
    for token in extract_tokens(&tree.root, kind).tokens {
        println!("{token}");
    }
    Ok(())
}

/// Sorted list of *.html files under `dir`; the order fixes document ids.
fn corpus_manifest(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "html"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no *.html files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn cmd_train_embeddings(args: TrainEmbeddingsArgs, cfg: &Config) -> Result<(), CliError> {
    let kind = parse_kind(&args.kind)?;
    let hyper = args.hyper.resolve(cfg)?;
    let workers = cfg
        .resolve(args.workers, "workers", 1usize)
        .map_err(CliError::Usage)?;
    let files = corpus_manifest(&args.corpus_dir)?;
    let corpus: Vec<TokenSequence> = files
        .iter()
        .map(|path| {
            let html = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            Ok(extract_tokens(&parse_html(&html).root, kind))
        })
        .collect::<Result<_, CliError>>()?;

    let output = train_dbow(&corpus, &hyper, workers)
        .map_err(|e| CliError::Usage(format!("training failed: {e}")))?;
    output
        .model
        .save(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot write model: {e}")))?;
    println!(
        "trained {kind} model on {} documents, vocabulary {} tokens",
        files.len(),
        output.model.vocab.len()
    );
    println!(
        "final epoch loss: {:.6}",
        output.epoch_losses.last().copied().unwrap_or(0.0)
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn features_for_pairs(
    pairs: &[statefold::eval::LabeledPair],
    et: &EmbeddingTypeSet,
    models: &ModelSet,
    opts: &InferOptions,
) -> Result<Vec<(statefold::saf::SimilarityFeatures, statefold::saf::PairLabel)>, CliError> {
    pairs
        .iter()
        .map(|pair| {
            let read = |p: &Path| {
                std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))
            };
            let a = parse_html(&read(&pair.page_a)?);
            let b = parse_html(&read(&pair.page_b)?);
            let features = compute_features(&a, &b, et, models, opts)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok((features, pair.label))
        })
        .collect()
}

fn cmd_train_saf(args: TrainSafArgs, cfg: &Config) -> Result<(), CliError> {
    let et = resolve_et(&args.et, cfg)?;
    let kind_name = args
        .classifier
        .clone()
        .or_else(|| cfg.get("classifier").map(str::to_string))
        .unwrap_or_else(|| "svm".to_string());
    let kind = ClassifierKind::parse(&kind_name).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = args.infer.resolve(cfg)?;
    let models = args.models.load(&et)?;
    let pairs = load_labeled_pairs(&args.pairs).map_err(|e| CliError::Usage(e.to_string()))?;
    if pairs.is_empty() {
        return Err(CliError::Usage("labeled pairs file has no rows".into()));
    }

    let dataset = features_for_pairs(&pairs, &et, &models, &opts)?;
    let classifier =
        train_classifier(kind, &dataset).map_err(|e| CliError::Usage(e.to_string()))?;
    classifier
        .save(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot write classifier: {e}")))?;

    let outcomes = dataset.iter().map(|(features, label)| {
        (*label, classifier.classify(features).expect("same feature set"))
    });
    let report = DetectionReport::from_outcomes(outcomes);
    if classifier.is_degenerate() {
        println!("warning: single-class dataset, trained a constant classifier");
    }
    println!(
        "trained {} classifier on {} pairs (training accuracy {:.4})",
        kind.name(),
        dataset.len(),
        report.accuracy
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn build_saf(
    spec: &str,
    et_flag: &Option<String>,
    model_args: &ModelPathArgs,
    infer: &InferArgs,
    cfg: &Config,
) -> Result<Box<dyn StateAbstraction>, CliError> {
    if spec == "oracle" {
        return Ok(Box::new(statefold::crawl::OracleSaf));
    }
    if spec == "always-distinct" {
        return Ok(Box::new(AlwaysDistinctSaf));
    }
    let opts = infer.resolve(cfg)?;
    if let Some(cut) = spec.strip_prefix("threshold=") {
        let cut: f64 = cut
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold in --saf {spec:?}")))?;
        let et = resolve_et(et_flag, cfg)?;
        let models = model_args.load(&et)?;
        let classifier = TrainedClassifier::threshold_at(cut, et);
        let saf = EmbeddingSaf::new(models, classifier, opts)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok(Box::new(saf));
    }
    if let Some(path) = spec.strip_prefix("classifier=") {
        let classifier = TrainedClassifier::load(Path::new(path))
            .map_err(|e| CliError::Usage(format!("cannot load {path}: {e}")))?;
        let models = model_args.load(classifier.feature_set())?;
        let saf = EmbeddingSaf::new(models, classifier, opts)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok(Box::new(saf));
    }
    Err(CliError::Usage(format!(
        "unknown --saf {spec:?}; use oracle, always-distinct, threshold=<cut>, or classifier=<path>"
    )))
}

fn cmd_crawl(args: CrawlArgs, cfg: &Config) -> Result<(), CliError> {
    let budget = CrawlBudget {
        max_events: cfg
            .resolve_opt(args.max_events, "max_events")
            .map_err(CliError::Usage)?,
        max_seconds: cfg
            .resolve_opt(args.max_seconds, "max_seconds")
            .map_err(CliError::Usage)?,
    };
    budget
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let saf = build_saf(&args.saf, &args.et, &args.models, &args.infer, cfg)?;

    let (mut driver, default_name): (Box<dyn AppDriver>, String) = match (&args.scenario, &args.site_dir) {
        (Some(path), None) => {
            let driver = FixtureDriver::from_path(path)
                .map_err(|e| CliError::Usage(format!("cannot load scenario: {e}")))?;
            let name = driver.scenario().name.clone();
            (Box::new(driver), name)
        }
        (None, Some(dir)) => {
            let driver = StaticSiteDriver::new(dir.clone())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "site".to_string());
            (Box::new(driver), name)
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --scenario or --site-dir is required".into(),
            ))
        }
    };

    let name = args.name.unwrap_or(default_name);
    let outcome = crawl(&mut *driver, &*saf, &budget, Strategy::DepthFirst, &name)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    outcome
        .model
        .save(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot write model: {e}")))?;
    println!(
        "crawled {:?} with the {} abstraction: {} states, {} edges, {} log entries",
        name,
        saf.name(),
        outcome.model.states.len(),
        outcome.model.edges.len(),
        outcome.model.event_log.len()
    );
    println!("wrote {}", args.out.display());
    if let Some(err) = outcome.error {
        return Err(CliError::Runtime(format!(
            "crawl aborted by driver failure (partial model written): {err}"
        )));
    }
    Ok(())
}

fn cmd_gen_tests(args: GenTestsArgs) -> Result<(), CliError> {
    let model = CrawlModel::load(&args.model)
        .map_err(|e| CliError::Usage(format!("cannot load model: {e}")))?;
    let suite = segment(&model).map_err(|e| CliError::Usage(e.to_string()))?;
    match args.format.as_str() {
        "json" => {
            suite
                .save_json(&args.out)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("wrote {} test paths to {}", suite.paths.len(), args.out.display());
        }
        "scripts" => {
            let files = suite
                .save_scripts(&args.out)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "wrote {} script files under {}",
                files.len(),
                args.out.display()
            );
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown format {other:?}; use json or scripts"
            )))
        }
    }
    Ok(())
}

fn cmd_eval_pairs(args: EvalPairsArgs, cfg: &Config) -> Result<(), CliError> {
    let opts = args.infer.resolve(cfg)?;
    let (classifier, et) = match (&args.classifier_file, args.threshold) {
        (Some(path), None) => {
            let c = TrainedClassifier::load(path)
                .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", path.display())))?;
            let et = c.feature_set().clone();
            (c, et)
        }
        (None, Some(cut)) => {
            let et = resolve_et(&args.et, cfg)?;
            (TrainedClassifier::threshold_at(cut, et.clone()), et)
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --classifier-file or --threshold is required".into(),
            ))
        }
    };
    let models = args.models.load(&et)?;
    let pairs = load_labeled_pairs(&args.pairs).map_err(|e| CliError::Usage(e.to_string()))?;
    if pairs.is_empty() {
        return Err(CliError::Usage("labeled pairs file has no rows".into()));
    }
    let report = eval_detection(&classifier, &pairs, &models, &et, &opts)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn cmd_eval_model(args: EvalModelArgs) -> Result<(), CliError> {
    let tool = load_clustering(&args.tool).map_err(|e| CliError::Usage(e.to_string()))?;
    let gt = load_clustering(&args.gt).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = model_quality(&tool, &gt).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        print!("{}", report.render_table());
        println!(
            "intra-pair precision {:.2}, recall {:.2}, F1 {:.2}",
            report.intra_precision, report.intra_recall, report.intra_f1
        );
    }
    Ok(())
}
