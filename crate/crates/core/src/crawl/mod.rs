//! Crawl-based model inference.
//!
//! The crawler walks an [`AppDriver`] depth-first. After firing a candidate
//! event it captures the resulting page; a state abstraction function
//! decides whether the capture becomes a new model state or an edge to an
//! existing one. Exploration continues in place from the reached state; when
//! the current state has no unfired candidates left the crawler resets the
//! driver and replays the shortest event path to the most recently
//! discovered state that still has work. Every firing — exploration or
//! navigation replay — lands in the event log, which is what test synthesis
//! later segments.

mod driver;
mod fixture;

pub use driver::StaticSiteDriver;
pub use fixture::{FixtureDriver, Scenario};

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{extract_tokens, parse_html, EmbeddingKind};
use crate::embedding::Embedding;
use crate::saf::{
    features_from_embeddings, EmbeddingTypeSet, InferOptions, ModelSet, PairLabel, SafError,
    TrainedClassifier,
};

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("driver failure: {0}")]
    Driver(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("state {0} is not reachable from the index")]
    Unreachable(usize),
    #[error("crawl budget must bound events or wall-clock time")]
    InvalidBudget,
    #[error(transparent)]
    Saf(#[from] SafError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
}

/// Element locator: child-index path from the document root plus the
/// human-readable label of the element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Locator {
    pub path: Vec<usize>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Click,
    Fill { value: String },
}

/// A fireable GUI event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub locator: Locator,
    pub action: Action,
}

impl Event {
    pub fn click(path: Vec<usize>, label: &str) -> Event {
        Event {
            locator: Locator {
                path,
                label: label.to_string(),
            },
            action: Action::Click,
        }
    }
}

/// One abstract state of the crawl model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: usize,
    pub discovery_index: usize,
    pub visited: bool,
    pub html: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub embeddings: BTreeMap<EmbeddingKind, Embedding>,
}

impl StateRecord {
    fn new(id: usize, html: String) -> StateRecord {
        StateRecord {
            id,
            discovery_index: id,
            visited: false,
            html,
            embeddings: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub event: Event,
    pub to: usize,
}

/// One firing against the driver. `reset_before` marks the first firing
/// after a driver reset; `was_new_state` marks firings whose capture was
/// admitted as a new state (navigation replays never are).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub from: usize,
    pub event: Event,
    pub to: usize,
    pub was_new_state: bool,
    pub reset_before: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrawlModel {
    pub version: u32,
    pub name: String,
    pub index_id: usize,
    pub states: Vec<StateRecord>,
    pub edges: Vec<Edge>,
    pub event_log: Vec<LogEntry>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl CrawlModel {
    fn new(name: &str) -> CrawlModel {
        CrawlModel {
            version: MODEL_FORMAT_VERSION,
            name: name.to_string(),
            index_id: 0,
            states: Vec::new(),
            edges: Vec::new(),
            event_log: Vec::new(),
        }
    }

    pub fn state(&self, id: usize) -> &StateRecord {
        &self.states[id]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<CrawlModel, CrawlError> {
        let model: CrawlModel =
            serde_json::from_str(json).map_err(|e| CrawlError::Format(e.to_string()))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(CrawlError::Format(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        for edge in &model.edges {
            if edge.from >= model.states.len() || edge.to >= model.states.len() {
                return Err(CrawlError::Format("edge endpoint out of range".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), CrawlError> {
        crate::binio::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CrawlModel, CrawlError> {
        let text = std::fs::read_to_string(path)?;
        CrawlModel::from_json(&text)
    }
}

/// Stateful session against the application under exploration. Drivers are
/// deterministic: the same operation sequence from construction yields the
/// same HTML captures.
pub trait AppDriver {
    /// Loads the index page.
    fn reset(&mut self) -> Result<String, CrawlError>;
    /// HTML of the page currently shown.
    fn current(&self) -> Result<String, CrawlError>;
    /// Fireable events on the current page, top to bottom.
    fn candidate_events(&self) -> Result<Vec<Event>, CrawlError>;
    /// Fires an event and returns the page it leads to.
    fn fire(&mut self, event: &Event) -> Result<String, CrawlError>;
}

/// Exploration budget; at least one bound must be set. `max_events` counts
/// exploration firings (navigation replays are overhead, not budget).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CrawlBudget {
    pub max_events: Option<u64>,
    pub max_seconds: Option<f64>,
}

impl CrawlBudget {
    pub fn events(n: u64) -> CrawlBudget {
        CrawlBudget {
            max_events: Some(n),
            max_seconds: None,
        }
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.max_events.is_none() && self.max_seconds.is_none() {
            return Err(CrawlError::InvalidBudget);
        }
        Ok(())
    }

    fn exhausted(&self, fired: u64, start: Instant) -> bool {
        if let Some(max) = self.max_events {
            if fired >= max {
                return true;
            }
        }
        if let Some(max) = self.max_seconds {
            if start.elapsed().as_secs_f64() >= max {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    DepthFirst,
}

// ---------------------------------------------------------------------------
// State abstraction functions
// ---------------------------------------------------------------------------

/// Decides whether two captured states are the same logical page.
pub trait StateAbstraction {
    /// Computes whatever per-state data the pair comparisons need and caches
    /// it in the record. Called once per captured page.
    fn prepare(&self, _state: &mut StateRecord) -> Result<(), CrawlError> {
        Ok(())
    }

    fn classify_pair(&self, a: &StateRecord, b: &StateRecord) -> Result<PairLabel, CrawlError>;

    fn name(&self) -> &'static str;
}

/// Treats every capture as distinct: the no-abstraction baseline that floods
/// the model with near-duplicate states.
pub struct AlwaysDistinctSaf;

impl StateAbstraction for AlwaysDistinctSaf {
    fn classify_pair(&self, _a: &StateRecord, _b: &StateRecord) -> Result<PairLabel, CrawlError> {
        Ok(PairLabel::Distinct)
    }

    fn name(&self) -> &'static str {
        "always-distinct"
    }
}

/// Ground-truth equivalence for fixture apps: pages carry a
/// `<!-- logical: NAME -->` marker naming their logical page. Pages without
/// markers compare by exact HTML equality.
pub struct OracleSaf;

pub(crate) fn logical_marker(html: &str) -> Option<&str> {
    let start = html.find("<!-- logical:")?;
    let rest = &html[start + "<!-- logical:".len()..];
    let end = rest.find("-->")?;
    Some(rest[..end].trim())
}

impl StateAbstraction for OracleSaf {
    fn classify_pair(&self, a: &StateRecord, b: &StateRecord) -> Result<PairLabel, CrawlError> {
        let same = match (logical_marker(&a.html), logical_marker(&b.html)) {
            (Some(ma), Some(mb)) => ma == mb,
            _ => a.html == b.html,
        };
        Ok(if same {
            PairLabel::Clone
        } else {
            PairLabel::Distinct
        })
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// The embedding-backed SAF: per-kind document vectors are inferred once per
/// state and cached; pair comparisons reduce to cosine similarities fed to
/// the classifier.
pub struct EmbeddingSaf {
    models: ModelSet,
    classifier: TrainedClassifier,
    opts: InferOptions,
}

impl EmbeddingSaf {
    pub fn new(
        models: ModelSet,
        classifier: TrainedClassifier,
        opts: InferOptions,
    ) -> Result<EmbeddingSaf, CrawlError> {
        for kind in classifier.feature_set().kinds() {
            models.require(*kind)?;
        }
        Ok(EmbeddingSaf {
            models,
            classifier,
            opts,
        })
    }

    pub fn feature_set(&self) -> &EmbeddingTypeSet {
        self.classifier.feature_set()
    }
}

impl StateAbstraction for EmbeddingSaf {
    fn prepare(&self, state: &mut StateRecord) -> Result<(), CrawlError> {
        let tree = parse_html(&state.html);
        for &kind in self.classifier.feature_set().kinds() {
            let model = self.models.require(kind)?;
            let tokens = extract_tokens(&tree.root, kind);
            let seed = crate::saf::page_seed(self.opts.session_seed, &tokens);
            let inferred = crate::embedding::infer_vector(model, &tokens, self.opts.epochs, seed)
                .map_err(SafError::from)?;
            state.embeddings.insert(kind, inferred.embedding);
        }
        Ok(())
    }

    fn classify_pair(&self, a: &StateRecord, b: &StateRecord) -> Result<PairLabel, CrawlError> {
        let features =
            features_from_embeddings(&a.embeddings, &b.embeddings, self.classifier.feature_set())?;
        Ok(self.classifier.classify(&features)?)
    }

    fn name(&self) -> &'static str {
        "embedding"
    }
}

// ---------------------------------------------------------------------------
// Crawl loop
// ---------------------------------------------------------------------------

/// Crawl result. `error` is set when a driver failure aborted the crawl; the
/// model holds everything captured up to that point.
#[derive(Debug)]
pub struct CrawlOutcome {
    pub model: CrawlModel,
    pub error: Option<String>,
}

/// Scans existing states in ascending discovery order and returns the first
/// one the SAF classifies as a clone of the candidate.
pub fn is_duplicate(
    candidate: &StateRecord,
    model: &CrawlModel,
    saf: &dyn StateAbstraction,
) -> Result<Option<usize>, CrawlError> {
    for state in &model.states {
        if saf.classify_pair(candidate, state)? == PairLabel::Clone {
            return Ok(Some(state.id));
        }
    }
    Ok(None)
}

/// Shortest event path from the index to `target` by breadth-first search
/// over the edges; ties resolve to the earliest-inserted edge.
pub fn path_to(model: &CrawlModel, target: usize) -> Result<Vec<Event>, CrawlError> {
    Ok(path_edges(model, target)?
        .into_iter()
        .map(|(event, _)| event)
        .collect())
}

fn path_edges(model: &CrawlModel, target: usize) -> Result<Vec<(Event, usize)>, CrawlError> {
    if target >= model.states.len() {
        return Err(CrawlError::Unreachable(target));
    }
    if target == model.index_id {
        return Ok(Vec::new());
    }
    let n = model.states.len();
    let mut parent: Vec<Option<usize>> = vec![None; n]; // edge index
    let mut seen = vec![false; n];
    seen[model.index_id] = true;
    let mut queue = VecDeque::from([model.index_id]);
    'bfs: while let Some(u) = queue.pop_front() {
        for (ei, edge) in model.edges.iter().enumerate() {
            if edge.from != u || seen[edge.to] {
                continue;
            }
            seen[edge.to] = true;
            parent[edge.to] = Some(ei);
            if edge.to == target {
                break 'bfs;
            }
            queue.push_back(edge.to);
        }
    }
    if !seen[target] {
        return Err(CrawlError::Unreachable(target));
    }
    let mut path = Vec::new();
    let mut cursor = target;
    while cursor != model.index_id {
        let ei = parent[cursor].expect("parent chain is complete");
        let edge = &model.edges[ei];
        path.push((edge.event.clone(), edge.to));
        cursor = edge.from;
    }
    path.reverse();
    Ok(path)
}

fn push_edge(model: &mut CrawlModel, from: usize, event: &Event, to: usize) {
    let exists = model
        .edges
        .iter()
        .any(|e| e.from == from && e.to == to && e.event == *event);
    if !exists {
        model.edges.push(Edge {
            from,
            event: event.clone(),
            to,
        });
    }
}

/// Explores the app behind `driver` under the given SAF and budget.
pub fn crawl(
    driver: &mut dyn AppDriver,
    saf: &dyn StateAbstraction,
    budget: &CrawlBudget,
    _strategy: Strategy,
    name: &str,
) -> Result<CrawlOutcome, CrawlError> {
    budget.validate()?;
    let start = Instant::now();
    let mut model = CrawlModel::new(name);
    let mut error: Option<String> = None;

    macro_rules! try_driver {
        ($expr:expr) => {
            match $expr {
                Ok(v) => v,
                Err(CrawlError::Driver(msg)) => {
                    error = Some(msg);
                    break;
                }
                Err(other) => return Err(other),
            }
        };
    }

    // Candidate bookkeeping per state: the harvested event list and the
    // index of the next unfired candidate.
    let mut candidates: Vec<Vec<Event>> = Vec::new();
    let mut next_unfired: Vec<usize> = Vec::new();
    let mut current = 0usize;
    let mut fired = 0u64;
    // Whether the next logged firing is the first since a reset.
    let mut fresh_reset = true;

    loop {
        if model.states.is_empty() {
            // Initial load.
            let html = try_driver!(driver.reset());
            let mut index = StateRecord::new(0, html);
            saf.prepare(&mut index)?;
            model.states.push(index);
            candidates.push(try_driver!(driver.candidate_events()));
            next_unfired.push(0);
            continue;
        }
        if budget.exhausted(fired, start) {
            break;
        }

        if next_unfired[current] >= candidates[current].len() {
            // Current state is exhausted: relocate to the most recently
            // discovered state that still has unfired candidates.
            let target = (0..model.states.len())
                .filter(|&s| next_unfired[s] < candidates[s].len())
                .max_by_key(|&s| model.states[s].discovery_index);
            let Some(target) = target else {
                break; // app exhaustively explored
            };
            try_driver!(driver.reset());
            fresh_reset = true;
            let path = path_edges(&model, target)?;
            let mut from = model.index_id;
            let mut failed = false;
            for (event, to) in path {
                match driver.fire(&event) {
                    Ok(_) => {}
                    Err(CrawlError::Driver(msg)) => {
                        error = Some(msg);
                        failed = true;
                        break;
                    }
                    Err(other) => return Err(other),
                }
                model.event_log.push(LogEntry {
                    from,
                    event,
                    to,
                    was_new_state: false,
                    reset_before: std::mem::take(&mut fresh_reset),
                });
                from = to;
            }
            if failed {
                break;
            }
            current = target;
            continue;
        }

        // Fire the next unfired candidate of the current state.
        let event = candidates[current][next_unfired[current]].clone();
        next_unfired[current] += 1;
        let html = try_driver!(driver.fire(&event));
        fired += 1;

        let mut captured = StateRecord::new(model.states.len(), html);
        saf.prepare(&mut captured)?;
        match is_duplicate(&captured, &model, saf)? {
            Some(matched) => {
                push_edge(&mut model, current, &event, matched);
                model.event_log.push(LogEntry {
                    from: current,
                    event,
                    to: matched,
                    was_new_state: false,
                    reset_before: std::mem::take(&mut fresh_reset),
                });
                // Continue in place: the page on screen is a duplicate of
                // the matched state, so its unfired candidates are next.
                current = matched;
            }
            None => {
                let id = captured.id;
                model.states.push(captured);
                candidates.push(try_driver!(driver.candidate_events()));
                next_unfired.push(0);
                push_edge(&mut model, current, &event, id);
                model.event_log.push(LogEntry {
                    from: current,
                    event,
                    to: id,
                    was_new_state: true,
                    reset_before: std::mem::take(&mut fresh_reset),
                });
                current = id;
            }
        }
    }

    // A state counts as visited once every harvested candidate was fired.
    for state in &mut model.states {
        state.visited = match (candidates.get(state.id), next_unfired.get(state.id)) {
            (Some(c), Some(&n)) => n >= c.len(),
            _ => false,
        };
    }

    Ok(CrawlOutcome { model, error })
}
