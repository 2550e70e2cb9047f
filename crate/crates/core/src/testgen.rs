//! Test synthesis: the crawl event log is segmented into test paths at reset
//! boundaries and exported as a machine-readable suite or as script
//! templates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawl::{Action, CrawlModel, Event};

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("crawl model has an empty event log")]
    EmptyLog,
    #[error("test suite is empty")]
    EmptySuite,
    #[error("malformed suite file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why the stretch behind this path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOrigin {
    /// The crawler ran out of candidate clickables on the path.
    NoMoreClickables,
    /// The stretch admitted no new states.
    NoNewStates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStep {
    pub event: Event,
    pub expected_state: usize,
}

/// One test path: events fired from the index page with the state the app
/// is expected to reach after each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPath {
    pub origin: PathOrigin,
    pub steps: Vec<TestStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub version: u32,
    pub model_ref: String,
    pub paths: Vec<TestPath>,
}

pub const SUITE_FORMAT_VERSION: u32 = 1;

/// Splits the event log into test paths. Every `reset_before` entry starts a
/// new stretch; a stretch that admitted no new state is tagged
/// [`PathOrigin::NoNewStates`]. Paths repeating an earlier path's exact
/// event sequence are dropped.
pub fn segment(model: &CrawlModel) -> Result<TestSuite, TestgenError> {
    if model.event_log.is_empty() {
        return Err(TestgenError::EmptyLog);
    }
    let mut stretches: Vec<Vec<&crate::crawl::LogEntry>> = Vec::new();
    for entry in &model.event_log {
        if entry.reset_before || stretches.is_empty() {
            stretches.push(Vec::new());
        }
        stretches.last_mut().unwrap().push(entry);
    }

    let mut seen: Vec<Vec<&Event>> = Vec::new();
    let mut paths = Vec::new();
    for stretch in stretches {
        let events: Vec<&Event> = stretch.iter().map(|e| &e.event).collect();
        if seen.contains(&events) {
            continue;
        }
        seen.push(events);
        let origin = if stretch.iter().any(|e| e.was_new_state) {
            PathOrigin::NoMoreClickables
        } else {
            PathOrigin::NoNewStates
        };
        paths.push(TestPath {
            origin,
            steps: stretch
                .iter()
                .map(|e| TestStep {
                    event: e.event.clone(),
                    expected_state: e.to,
                })
                .collect(),
        });
    }

    Ok(TestSuite {
        version: SUITE_FORMAT_VERSION,
        model_ref: model.name.clone(),
        paths,
    })
}

impl TestSuite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<TestSuite, TestgenError> {
        let suite: TestSuite =
            serde_json::from_str(json).map_err(|e| TestgenError::Format(e.to_string()))?;
        if suite.version != SUITE_FORMAT_VERSION {
            return Err(TestgenError::Format(format!(
                "unsupported suite version {}",
                suite.version
            )));
        }
        Ok(suite)
    }

    /// Writes the machine-readable suite.
    pub fn save_json(&self, path: &Path) -> Result<(), TestgenError> {
        if self.paths.is_empty() {
            return Err(TestgenError::EmptySuite);
        }
        crate::binio::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<TestSuite, TestgenError> {
        let text = std::fs::read_to_string(path)?;
        TestSuite::from_json(&text)
    }

    /// Writes one script template per path into `dir` and returns the file
    /// paths. Scripts render events as navigate/click/fill steps with
    /// expected-state comments.
    pub fn save_scripts(&self, dir: &Path) -> Result<Vec<PathBuf>, TestgenError> {
        if self.paths.is_empty() {
            return Err(TestgenError::EmptySuite);
        }
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, _) in self.paths.iter().enumerate() {
            let file = dir.join(format!("test_path_{:03}.txt", i + 1));
            crate::binio::write_atomic(&file, self.render_script(i).as_bytes())?;
            files.push(file);
        }
        Ok(files)
    }

    pub fn render_script(&self, index: usize) -> String {
        let path = &self.paths[index];
        let origin = match path.origin {
            PathOrigin::NoMoreClickables => "no-more-clickables",
            PathOrigin::NoNewStates => "no-new-states",
        };
        let mut out = String::new();
        out.push_str(&format!(
            "# test path {:03} from model {:?} (origin: {origin})\n",
            index + 1,
            self.model_ref
        ));
        out.push_str("navigate to the index page\n");
        for step in &path.steps {
            let line = match &step.event.action {
                Action::Click => format!("click {:?}", step.event.locator.label),
                Action::Fill { value } => {
                    format!("fill {:?} with {:?}", step.event.locator.label, value)
                }
            };
            out.push_str(&format!(
                "{line:<40} # expect state {}\n",
                step.expected_state
            ));
        }
        out
    }
}
