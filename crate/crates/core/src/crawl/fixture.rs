//! In-process simulated web apps driven by a declarative scenario file.
//!
//! A scenario lists logical pages as HTML templates, session variables, and
//! labeled transitions with optional effects (`set VAR VALUE`,
//! `incr VAR [max N]`). Templates support `{{var}}` substitution,
//! `{{#if var=value}}...{{/if}}` blocks and `{{#repeat var}}...{{/repeat}}`
//! blocks (with `{{i}}` as the 1-based iteration counter), which is enough
//! to express pages that mutate as the session progresses, such as a detail
//! page growing review rows.
//!
//! Rendered pages carry a `<!-- logical: ID -->` marker naming their logical
//! page. The marker is a comment, so it never reaches token sequences or
//! embeddings; the oracle state abstraction reads it as ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::crawl::{Action, AppDriver, CrawlError, Event, Locator};
use crate::dom::{parse_html, DomNode, NodeKind};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub start_page: String,
    #[serde(default)]
    pub vars: BTreeMap<String, VarValue>,
    pub pages: Vec<PageDef>,
    pub transitions: Vec<TransitionDef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageDef {
    pub id: String,
    pub html: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDef {
    pub page: String,
    pub label: String,
    pub target: String,
    #[serde(default)]
    pub effects: Vec<String>,
    /// Event action; `click` (default) or `fill:VALUE`.
    #[serde(default)]
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VarValue {
    Int(i64),
    Str(String),
}

impl std::fmt::Display for VarValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarValue::Int(v) => write!(f, "{v}"),
            VarValue::Str(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone)]
enum Effect {
    Set { var: String, value: VarValue },
    Incr { var: String, max: Option<i64> },
}

fn parse_effect(spec: &str) -> Result<Effect, CrawlError> {
    let parts: Vec<&str> = spec.split_whitespace().collect();
    match parts.as_slice() {
        ["set", var, value] => Ok(Effect::Set {
            var: var.to_string(),
            value: value
                .parse::<i64>()
                .map(VarValue::Int)
                .unwrap_or_else(|_| VarValue::Str(value.to_string())),
        }),
        ["incr", var] => Ok(Effect::Incr {
            var: var.to_string(),
            max: None,
        }),
        ["incr", var, "max", n] => Ok(Effect::Incr {
            var: var.to_string(),
            max: Some(n.parse().map_err(|_| bad_effect(spec))?),
        }),
        _ => Err(bad_effect(spec)),
    }
}

fn bad_effect(spec: &str) -> CrawlError {
    CrawlError::Scenario(format!("unparseable effect {spec:?}"))
}

impl Scenario {
    pub fn from_str(text: &str) -> Result<Scenario, CrawlError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| CrawlError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Scenario, CrawlError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_str(&text)
    }

    fn validate(&self) -> Result<(), CrawlError> {
        let page = |id: &str| self.pages.iter().any(|p| p.id == id);
        if !page(&self.start_page) {
            return Err(CrawlError::Scenario(format!(
                "start page {:?} is not defined",
                self.start_page
            )));
        }
        for t in &self.transitions {
            if !page(&t.page) || !page(&t.target) {
                return Err(CrawlError::Scenario(format!(
                    "transition {:?} references undefined pages",
                    t.label
                )));
            }
            if t.label.trim().is_empty() {
                return Err(CrawlError::Scenario("transition with empty label".into()));
            }
            for effect in &t.effects {
                parse_effect(effect)?;
            }
        }
        Ok(())
    }
}

/// Deterministic in-process driver for a [`Scenario`]. Session variables
/// persist across `reset`; a fresh driver starts from the scenario's initial
/// state.
pub struct FixtureDriver {
    scenario: Scenario,
    vars: BTreeMap<String, VarValue>,
    current_page: String,
}

impl FixtureDriver {
    pub fn new(scenario: Scenario) -> FixtureDriver {
        let vars = scenario.vars.clone();
        let current_page = scenario.start_page.clone();
        FixtureDriver {
            scenario,
            vars,
            current_page,
        }
    }

    pub fn from_path(path: &Path) -> Result<FixtureDriver, CrawlError> {
        Ok(FixtureDriver::new(Scenario::from_path(path)?))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn render_current(&self) -> Result<String, CrawlError> {
        self.render_page(&self.current_page)
    }

    /// Renders a page under the current session variables, including the
    /// logical marker.
    pub fn render_page(&self, page_id: &str) -> Result<String, CrawlError> {
        let page = self
            .scenario
            .pages
            .iter()
            .find(|p| p.id == page_id)
            .ok_or_else(|| CrawlError::Scenario(format!("unknown page {page_id:?}")))?;
        let body = render_template(&page.html, &self.vars)?;
        Ok(format!("<!-- logical: {} -->\n{}", page.id, body))
    }

    fn transition(&self, label: &str) -> Option<&TransitionDef> {
        self.scenario
            .transitions
            .iter()
            .find(|t| t.page == self.current_page && t.label == label)
    }
}

impl AppDriver for FixtureDriver {
    fn reset(&mut self) -> Result<String, CrawlError> {
        self.current_page = self.scenario.start_page.clone();
        self.render_current()
    }

    fn current(&self) -> Result<String, CrawlError> {
        self.render_current()
    }

    /// Anchors of the rendered page, in document order, that have a declared
    /// transition. Conditional template blocks can hide anchors, so the
    /// candidate list varies with the session state.
    fn candidate_events(&self) -> Result<Vec<Event>, CrawlError> {
        let html = self.render_current()?;
        let tree = parse_html(&html);
        let mut events = Vec::new();
        let mut path = Vec::new();
        collect_anchor_events(&tree.root, &mut path, &mut |anchor_path, label| {
            if let Some(t) = self.transition(&label) {
                let action = match t.action.as_deref() {
                    Some(spec) if spec.starts_with("fill:") => Action::Fill {
                        value: spec["fill:".len()..].to_string(),
                    },
                    _ => Action::Click,
                };
                events.push(Event {
                    locator: Locator {
                        path: anchor_path.to_vec(),
                        label,
                    },
                    action,
                });
            }
        });
        Ok(events)
    }

    fn fire(&mut self, event: &Event) -> Result<String, CrawlError> {
        let label = &event.locator.label;
        let Some(transition) = self.transition(label).cloned() else {
            return Err(CrawlError::Driver(format!(
                "page {:?} has no transition labeled {:?}",
                self.current_page, label
            )));
        };
        for spec in &transition.effects {
            match parse_effect(spec)? {
                Effect::Set { var, value } => {
                    self.vars.insert(var, value);
                }
                Effect::Incr { var, max } => {
                    let current = match self.vars.get(&var) {
                        Some(VarValue::Int(v)) => *v,
                        _ => 0,
                    };
                    let mut next = current + 1;
                    if let Some(max) = max {
                        next = next.min(max);
                    }
                    self.vars.insert(var, VarValue::Int(next));
                }
            }
        }
        self.current_page = transition.target.clone();
        self.render_current()
    }
}

/// Depth-first anchor walk producing (child-index path, normalized label).
fn collect_anchor_events(
    node: &DomNode,
    path: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize], String),
) {
    if let NodeKind::Element(tag) = &node.kind {
        if tag == "a" {
            let label = subtree_text(node);
            visit(path, label);
        }
    }
    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        collect_anchor_events(child, path, visit);
        path.pop();
    }
}

fn subtree_text(node: &DomNode) -> String {
    let mut out = String::new();
    fn walk(node: &DomNode, out: &mut String) {
        match &node.kind {
            NodeKind::Text(raw) => {
                out.push(' ');
                out.push_str(raw);
            }
            NodeKind::Element(_) => {
                for child in &node.children {
                    walk(child, out);
                }
            }
            _ => {}
        }
    }
    walk(node, &mut out);
    out.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Template engine
// ---------------------------------------------------------------------------

/// Expands `{{var}}`, `{{#if var=value}}...{{/if}}` and
/// `{{#repeat var}}...{{/repeat}}` (with `{{i}}` inside the block).
fn render_template(
    template: &str,
    vars: &BTreeMap<String, VarValue>,
) -> Result<String, CrawlError> {
    render_block(template, vars, None)
}

fn render_block(
    template: &str,
    vars: &BTreeMap<String, VarValue>,
    loop_index: Option<i64>,
) -> Result<String, CrawlError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            return Err(CrawlError::Scenario("unterminated {{".into()));
        };
        let directive = after[..close].trim();
        let after_close = &after[close + 2..];

        if let Some(cond) = directive.strip_prefix("#if ") {
            let (body, tail) = split_block(after_close, "#if", "/if")?;
            let (var, expected) = cond
                .split_once('=')
                .ok_or_else(|| CrawlError::Scenario(format!("bad condition {cond:?}")))?;
            let actual = lookup(vars, var.trim(), loop_index)?;
            if actual == expected.trim() {
                out.push_str(&render_block(body, vars, loop_index)?);
            }
            rest = tail;
        } else if let Some(var) = directive.strip_prefix("#repeat ") {
            let (body, tail) = split_block(after_close, "#repeat", "/repeat")?;
            let count = match vars.get(var.trim()) {
                Some(VarValue::Int(v)) => *v,
                other => {
                    return Err(CrawlError::Scenario(format!(
                        "repeat over non-integer variable {var:?} ({other:?})"
                    )))
                }
            };
            for i in 1..=count.max(0) {
                out.push_str(&render_block(body, vars, Some(i))?);
            }
            rest = tail;
        } else {
            out.push_str(&lookup(vars, directive, loop_index)?);
            rest = after_close;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn lookup(
    vars: &BTreeMap<String, VarValue>,
    name: &str,
    loop_index: Option<i64>,
) -> Result<String, CrawlError> {
    if name == "i" {
        if let Some(i) = loop_index {
            return Ok(i.to_string());
        }
    }
    vars.get(name)
        .map(|v| v.to_string())
        .ok_or_else(|| CrawlError::Scenario(format!("unknown template variable {name:?}")))
}

/// Splits `text` into the block body before the matching `{{/close}}` and
/// the remainder after it, honoring nested blocks of the same kind.
fn split_block<'a>(
    text: &'a str,
    open: &str,
    close: &str,
) -> Result<(&'a str, &'a str), CrawlError> {
    let open_marker = format!("{{{{{open} ");
    let close_marker = format!("{{{{{close}}}}}");
    let mut depth = 0usize;
    let mut cursor = 0usize;
    loop {
        let next_open = text[cursor..].find(&open_marker);
        let next_close = text[cursor..].find(&close_marker);
        match (next_open, next_close) {
            (Some(o), Some(c)) if o < c => {
                depth += 1;
                cursor += o + open_marker.len();
            }
            (_, Some(c)) => {
                if depth == 0 {
                    let body = &text[..cursor + c];
                    let tail = &text[cursor + c + close_marker.len()..];
                    return Ok((body, tail));
                }
                depth -= 1;
                cursor += c + close_marker.len();
            }
            _ => {
                return Err(CrawlError::Scenario(format!(
                    "missing closing {close_marker}"
                )))
            }
        }
    }
}
