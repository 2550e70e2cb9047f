//! Driver over a directory of static HTML pages: events are anchor clicks
//! resolved against relative hrefs. The session starts at `index.html`.

use std::path::{Component, Path, PathBuf};

use crate::crawl::{Action, AppDriver, CrawlError, Event, Locator};

pub struct StaticSiteDriver {
    root: PathBuf,
    /// Path of the current page, relative to the root.
    current: PathBuf,
    html: String,
}

/// An anchor found in a page: ordinal position, label text, raw href.
struct AnchorRef {
    ordinal: usize,
    label: String,
    href: String,
}

impl StaticSiteDriver {
    pub fn new(root: impl Into<PathBuf>) -> Result<StaticSiteDriver, CrawlError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(CrawlError::Driver(format!(
                "site root {} is not a directory",
                root.display()
            )));
        }
        let mut driver = StaticSiteDriver {
            root,
            current: PathBuf::new(),
            html: String::new(),
        };
        driver.load(Path::new("index.html"))?;
        Ok(driver)
    }

    fn load(&mut self, rel: &Path) -> Result<String, CrawlError> {
        let full = self.root.join(rel);
        let html = std::fs::read_to_string(&full)
            .map_err(|e| CrawlError::Driver(format!("cannot read {}: {e}", full.display())))?;
        self.current = rel.to_path_buf();
        self.html = html.clone();
        Ok(html)
    }

    /// Resolves `href` against the current page, staying inside the root.
    /// Returns None for external, anchor-only, or escaping links.
    fn resolve(&self, href: &str) -> Option<PathBuf> {
        let href = href.split(['#', '?']).next().unwrap_or("");
        if href.is_empty()
            || href.contains("://")
            || href.starts_with("mailto:")
            || href.starts_with("javascript:")
        {
            return None;
        }
        let base = if let Some(stripped) = href.strip_prefix('/') {
            PathBuf::from(stripped)
        } else {
            let dir = self.current.parent().unwrap_or(Path::new(""));
            dir.join(href)
        };
        let mut normalized = PathBuf::new();
        for comp in base.components() {
            match comp {
                Component::Normal(p) => normalized.push(p),
                Component::ParentDir => {
                    if !normalized.pop() {
                        return None;
                    }
                }
                Component::CurDir => {}
                _ => return None,
            }
        }
        Some(normalized)
    }

    fn anchors(&self) -> Vec<AnchorRef> {
        scan_anchors(&self.html)
    }
}

/// Linear scan for `<a ...>label</a>` pairs. Nested anchors are invalid
/// HTML and not supported.
fn scan_anchors(html: &str) -> Vec<AnchorRef> {
    let mut anchors = Vec::new();
    let lower = html.to_lowercase();
    let bytes = lower.as_bytes();
    let mut pos = 0;
    while let Some(start) = lower[pos..].find("<a").map(|k| pos + k) {
        let after = start + 2;
        if after >= bytes.len() || !(bytes[after] == b' ' || bytes[after] == b'>') {
            pos = after;
            continue;
        }
        let Some(tag_end) = lower[after..].find('>').map(|k| after + k) else {
            break;
        };
        let tag = &html[start..tag_end];
        let href = extract_attr(tag, "href").unwrap_or_default();
        let Some(close) = lower[tag_end..].find("</a").map(|k| tag_end + k) else {
            break;
        };
        let label_raw = &html[tag_end + 1..close];
        let label = normalize_label(label_raw);
        anchors.push(AnchorRef {
            ordinal: anchors.len(),
            label,
            href,
        });
        pos = close + 3;
    }
    anchors
}

fn extract_attr(tag: &str, name: &str) -> Option<String> {
    let lower = tag.to_lowercase();
    let at = lower.find(&format!("{name}="))?;
    let rest = &tag[at + name.len() + 1..];
    let mut chars = rest.chars();
    match chars.next()? {
        q @ ('"' | '\'') => {
            let rest = &rest[1..];
            let end = rest.find(q)?;
            Some(rest[..end].to_string())
        }
        _ => {
            let end = rest.find([' ', '>', '/']).unwrap_or(rest.len());
            Some(rest[..end].to_string())
        }
    }
}

/// Strips tags, lowercases, and collapses whitespace.
fn normalize_label(raw: &str) -> String {
    let mut text = String::new();
    let mut in_tag = false;
    for c in raw.chars() {
        match c {
            '<' => in_tag = true,
            '>' => in_tag = false,
            c if !in_tag => text.push(c),
            _ => {}
        }
    }
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl AppDriver for StaticSiteDriver {
    fn reset(&mut self) -> Result<String, CrawlError> {
        self.load(Path::new("index.html"))
    }

    fn current(&self) -> Result<String, CrawlError> {
        Ok(self.html.clone())
    }

    fn candidate_events(&self) -> Result<Vec<Event>, CrawlError> {
        let events = self
            .anchors()
            .into_iter()
            .filter(|a| {
                self.resolve(&a.href)
                    .map(|t| self.root.join(&t).is_file())
                    .unwrap_or(false)
            })
            .map(|a| Event {
                locator: Locator {
                    path: vec![a.ordinal],
                    label: a.label,
                },
                action: Action::Click,
            })
            .collect();
        Ok(events)
    }

    fn fire(&mut self, event: &Event) -> Result<String, CrawlError> {
        let anchors = self.anchors();
        let ordinal = *event.locator.path.first().unwrap_or(&usize::MAX);
        let anchor = anchors
            .iter()
            .find(|a| a.ordinal == ordinal && a.label == event.locator.label)
            .or_else(|| anchors.iter().find(|a| a.label == event.locator.label))
            .ok_or_else(|| {
                CrawlError::Driver(format!(
                    "no anchor {:?} on {}",
                    event.locator.label,
                    self.current.display()
                ))
            })?;
        let target = self.resolve(&anchor.href).ok_or_else(|| {
            CrawlError::Driver(format!("unresolvable href {:?}", anchor.href))
        })?;
        self.load(&target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawl::{crawl, AlwaysDistinctSaf, CrawlBudget, OracleSaf, Strategy};

    fn site() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("index.html"),
            "<html><body><h1>Home</h1>\
             <a href=\"about.html\">about the site</a>\
             <a href=\"docs/guide.html\">user guide</a>\
             <a href=\"https://example.com\">external</a>\
             <a href=\"missing.html\">broken</a></body></html>",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("about.html"),
            "<html><body><p>About page</p><a href=\"index.html\">home</a></body></html>",
        )
        .unwrap();
        std::fs::create_dir(dir.path().join("docs")).unwrap();
        std::fs::write(
            dir.path().join("docs/guide.html"),
            "<html><body><p>Guide</p><a href=\"../about.html\">about the site</a></body></html>",
        )
        .unwrap();
        dir
    }

    #[test]
    fn candidates_skip_external_and_dead_links() {
        let dir = site();
        let driver = StaticSiteDriver::new(dir.path()).unwrap();
        let events = driver.candidate_events().unwrap();
        let labels: Vec<&str> = events.iter().map(|e| e.locator.label.as_str()).collect();
        assert_eq!(labels, vec!["about the site", "user guide"]);
    }

    #[test]
    fn relative_navigation_works() {
        let dir = site();
        let mut driver = StaticSiteDriver::new(dir.path()).unwrap();
        let events = driver.candidate_events().unwrap();
        let html = driver.fire(&events[1]).unwrap();
        assert!(html.contains("Guide"));
        let events = driver.candidate_events().unwrap();
        let html = driver.fire(&events[0]).unwrap();
        assert!(html.contains("About page"));
    }

    #[test]
    fn oracle_crawl_discovers_every_page_exactly_once() {
        // Static pages carry no logical markers, so the oracle falls back to
        // exact HTML equality and deduplicates re-captures.
        let dir = site();
        let mut driver = StaticSiteDriver::new(dir.path()).unwrap();
        let outcome = crawl(
            &mut driver,
            &OracleSaf,
            &CrawlBudget::events(20),
            Strategy::DepthFirst,
            "static",
        )
        .unwrap();
        assert!(outcome.error.is_none());
        assert_eq!(outcome.model.states.len(), 3);
        let bodies: Vec<&str> = outcome
            .model
            .states
            .iter()
            .map(|s| s.html.as_str())
            .collect();
        assert!(bodies.iter().any(|h| h.contains("Guide")));
        assert!(bodies.iter().any(|h| h.contains("About")));
    }

    #[test]
    fn always_distinct_crawl_floods_with_recaptures() {
        let dir = site();
        let mut driver = StaticSiteDriver::new(dir.path()).unwrap();
        let outcome = crawl(
            &mut driver,
            &AlwaysDistinctSaf,
            &CrawlBudget::events(10),
            Strategy::DepthFirst,
            "static",
        )
        .unwrap();
        assert!(outcome.error.is_none());
        assert_eq!(outcome.model.states.len(), 11);
    }

    #[test]
    fn missing_index_is_a_driver_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(StaticSiteDriver::new(dir.path()).is_err());
    }
}
