//! Lenient HTML parsing and token-sequence extraction.
//!
//! Parsing is total: any byte string yields a tree. The tree keeps only what
//! the embedding pipeline consumes — element tag names, text, and markers for
//! comments and script/style subtrees. Attributes, doctypes and processing
//! instructions are dropped.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Token-sequence representation of a page.
///
/// The variant order is meaningful: feature vectors list similarity scores
/// in `Content < Tags < ContentTags` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Content,
    Tags,
    ContentTags,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 3] = [
        EmbeddingKind::Content,
        EmbeddingKind::Tags,
        EmbeddingKind::ContentTags,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Content => "content",
            EmbeddingKind::Tags => "tags",
            EmbeddingKind::ContentTags => "content+tags",
        }
    }

    /// Parses the CLI/config spelling. Accepts `content`, `tags`,
    /// `content+tags` (also `content_tags` / `content-tags`).
    pub fn parse(s: &str) -> Option<EmbeddingKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "content" => Some(EmbeddingKind::Content),
            "tags" => Some(EmbeddingKind::Tags),
            "content+tags" | "content_tags" | "content-tags" | "contenttags" => {
                Some(EmbeddingKind::ContentTags)
            }
            _ => None,
        }
    }

    fn wants_tags(self) -> bool {
        matches!(self, EmbeddingKind::Tags | EmbeddingKind::ContentTags)
    }

    fn wants_content(self) -> bool {
        matches!(self, EmbeddingKind::Content | EmbeddingKind::ContentTags)
    }
}

impl std::fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered token list for one representation kind.
///
/// Every token is non-empty, lowercase and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub kind: EmbeddingKind,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// Element with a non-empty lowercase tag name.
    Element(String),
    /// Raw text segment.
    Text(String),
    Comment,
    ScriptOrStyle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    pub kind: NodeKind,
    pub children: Vec<DomNode>,
}

impl DomNode {
    fn element(tag: &str) -> DomNode {
        DomNode {
            kind: NodeKind::Element(tag.to_string()),
            children: Vec::new(),
        }
    }

    fn leaf(kind: NodeKind) -> DomNode {
        DomNode {
            kind,
            children: Vec::new(),
        }
    }
}

/// Lossy parse of an HTML document. The root is always an `html` element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    pub root: DomNode,
}

/// Elements that never take children.
const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source",
    "track", "wbr",
];

/// Elements that close an open element of the same name instead of nesting,
/// so `<p>a<p>b` parses as siblings.
const NO_SELF_NEST: &[&str] = &["p", "li", "dt", "dd", "option", "tr", "td", "th"];

/// Lowercases the text, splits on Unicode whitespace, and trims leading and
/// trailing non-alphanumeric characters off each fragment. A fragment that is
/// entirely non-alphanumeric is kept whole, so `$` and `+` survive while
/// `item.` becomes `item` and `9.99` stays `9.99`.
pub fn tokenize_text(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split_whitespace()
        .map(|frag| {
            let trimmed = frag.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                frag.to_string()
            } else {
                trimmed.to_string()
            }
        })
        .collect()
}

/// Extracts the token sequence of `kind` from the subtree rooted at `node`:
/// depth-first, left-to-right, emitting tag names on element entry and
/// tokenized text at text nodes. Comment and script/style subtrees contribute
/// nothing.
pub fn extract_tokens(node: &DomNode, kind: EmbeddingKind) -> TokenSequence {
    let mut tokens = Vec::new();
    collect_tokens(node, kind, &mut tokens);
    TokenSequence { kind, tokens }
}

fn collect_tokens(node: &DomNode, kind: EmbeddingKind, out: &mut Vec<String>) {
    match &node.kind {
        NodeKind::Element(tag) => {
            if kind.wants_tags() {
                out.push(tag.clone());
            }
            for child in &node.children {
                collect_tokens(child, kind, out);
            }
        }
        NodeKind::Text(raw) => {
            if kind.wants_content() {
                out.extend(tokenize_text(raw));
            }
        }
        NodeKind::Comment | NodeKind::ScriptOrStyle => {}
    }
}

/// Debug serialization of the tree back to markup. Feeding the result to
/// [`parse_html`] reproduces the same token sequences for all three kinds.
pub fn serialize(tree: &DomTree) -> String {
    let mut out = String::new();
    serialize_node(&tree.root, &mut out);
    out
}

fn serialize_node(node: &DomNode, out: &mut String) {
    match &node.kind {
        NodeKind::Element(tag) => {
            let _ = write!(out, "<{tag}>");
            for child in &node.children {
                serialize_node(child, out);
            }
            if !VOID_ELEMENTS.contains(&tag.as_str()) {
                let _ = write!(out, "</{tag}>");
            }
        }
        NodeKind::Text(raw) => {
            // Escape the two characters that would change the parse.
            out.push_str(&raw.replace('&', "&amp;").replace('<', "&lt;"));
        }
        NodeKind::Comment => out.push_str("<!-- -->"),
        NodeKind::ScriptOrStyle => out.push_str("<script></script>"),
    }
}

/// Parses arbitrary HTML into a [`DomTree`]. Never fails: unclosed tags are
/// closed at their parent boundary, stray end tags are ignored, and when the
/// input is not a single `html` document an `html`/`body` wrapper is
/// synthesized. Empty input yields a bare `html` root.
pub fn parse_html(source: &str) -> DomTree {
    let mut parser = Parser {
        input: source.as_bytes(),
        pos: 0,
    };
    let forest = parser.parse_forest();
    DomTree {
        root: normalize(forest),
    }
}

fn normalize(mut forest: Vec<DomNode>) -> DomNode {
    // Top-level comments carry no tokens and would otherwise force a wrapper
    // around an existing html element.
    forest.retain(|n| n.kind != NodeKind::Comment);
    if forest.len() == 1 {
        if let NodeKind::Element(tag) = &forest[0].kind {
            if tag == "html" {
                return forest.pop().unwrap();
            }
        }
    }
    let mut html = DomNode::element("html");
    if forest.is_empty() {
        return html;
    }
    let top_level_sections = forest.iter().all(|n| {
        matches!(&n.kind, NodeKind::Element(tag) if tag == "head" || tag == "body")
    });
    if top_level_sections {
        html.children = forest;
    } else {
        let mut body = DomNode::element("body");
        body.children = forest;
        html.children.push(body);
    }
    html
}

enum Token {
    StartTag { name: String, self_closing: bool },
    EndTag { name: String },
    Text(String),
    Comment,
    ScriptOrStyle,
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn parse_forest(&mut self) -> Vec<DomNode> {
        // Stack of open elements; index 0 is a synthetic holder for the
        // top-level forest.
        let mut stack: Vec<DomNode> = vec![DomNode::element("#root")];
        while let Some(token) = self.next_token() {
            match token {
                Token::Text(raw) => {
                    if !raw.chars().all(char::is_whitespace) {
                        // Adjacent text runs merge into one node.
                        let children = &mut stack.last_mut().unwrap().children;
                        if let Some(DomNode {
                            kind: NodeKind::Text(prev),
                            ..
                        }) = children.last_mut()
                        {
                            prev.push_str(&raw);
                        } else {
                            children.push(DomNode::leaf(NodeKind::Text(raw)));
                        }
                    }
                }
                Token::Comment => {
                    stack
                        .last_mut()
                        .unwrap()
                        .children
                        .push(DomNode::leaf(NodeKind::Comment));
                }
                Token::ScriptOrStyle => {
                    stack
                        .last_mut()
                        .unwrap()
                        .children
                        .push(DomNode::leaf(NodeKind::ScriptOrStyle));
                }
                Token::StartTag { name, self_closing } => {
                    if NO_SELF_NEST.contains(&name.as_str()) {
                        if let NodeKind::Element(open) = &stack.last().unwrap().kind {
                            if *open == name && stack.len() > 1 {
                                let done = stack.pop().unwrap();
                                stack.last_mut().unwrap().children.push(done);
                            }
                        }
                    }
                    if self_closing || VOID_ELEMENTS.contains(&name.as_str()) {
                        stack
                            .last_mut()
                            .unwrap()
                            .children
                            .push(DomNode::element(&name));
                    } else {
                        stack.push(DomNode::element(&name));
                    }
                }
                Token::EndTag { name } => {
                    // Close up to the matching open element; ignore the end
                    // tag if nothing matches.
                    let matches = stack.iter().rposition(|n| match &n.kind {
                        NodeKind::Element(tag) => *tag == name,
                        _ => false,
                    });
                    if let Some(idx) = matches {
                        if idx == 0 {
                            continue;
                        }
                        while stack.len() > idx {
                            let done = stack.pop().unwrap();
                            stack.last_mut().unwrap().children.push(done);
                        }
                    }
                }
            }
        }
        while stack.len() > 1 {
            let done = stack.pop().unwrap();
            stack.last_mut().unwrap().children.push(done);
        }
        stack.pop().unwrap().children
    }

    fn next_token(&mut self) -> Option<Token> {
        if self.pos >= self.input.len() {
            return None;
        }
        if self.input[self.pos] != b'<' {
            return Some(Token::Text(self.read_text()));
        }
        match self.input.get(self.pos + 1) {
            Some(b'!') => {
                if self.input[self.pos..].starts_with(b"<!--") {
                    self.skip_comment();
                    Some(Token::Comment)
                } else {
                    // Doctype or other markup declaration: discard.
                    self.skip_until(b'>');
                    self.next_token()
                }
            }
            Some(b'?') => {
                self.skip_until(b'>');
                self.next_token()
            }
            Some(b'/') => {
                self.pos += 2;
                let name = self.read_tag_name();
                self.skip_until(b'>');
                if name.is_empty() {
                    self.next_token()
                } else {
                    Some(Token::EndTag { name })
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                self.pos += 1;
                let name = self.read_tag_name();
                let self_closing = self.finish_tag();
                if name == "script" || name == "style" {
                    if !self_closing {
                        self.skip_raw_text(&name);
                    }
                    Some(Token::ScriptOrStyle)
                } else {
                    Some(Token::StartTag { name, self_closing })
                }
            }
            _ => {
                // A lone '<' that opens nothing: literal text.
                self.pos += 1;
                Some(Token::Text("<".to_string()))
            }
        }
    }

    fn read_text(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.input.len() && self.input[self.pos] != b'<' {
            self.pos += 1;
        }
        decode_entities(&String::from_utf8_lossy(&self.input[start..self.pos]))
    }

    fn read_tag_name(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.input.len() {
            let c = self.input[self.pos];
            if c.is_ascii_alphanumeric() || c == b'-' || c == b':' || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.input[start..self.pos]).to_lowercase()
    }

    /// Skips attributes up to `>`, honoring quoted values. Returns whether
    /// the tag ended with `/>`.
    fn finish_tag(&mut self) -> bool {
        let mut quote: Option<u8> = None;
        let mut last_nonspace = 0u8;
        while self.pos < self.input.len() {
            let c = self.input[self.pos];
            self.pos += 1;
            match quote {
                Some(q) => {
                    if c == q {
                        quote = None;
                    }
                }
                None => match c {
                    b'"' | b'\'' => quote = Some(c),
                    b'>' => return last_nonspace == b'/',
                    _ => {
                        if !c.is_ascii_whitespace() {
                            last_nonspace = c;
                        }
                    }
                },
            }
        }
        false
    }

    fn skip_comment(&mut self) {
        self.pos += 4;
        while self.pos < self.input.len() {
            if self.input[self.pos..].starts_with(b"-->") {
                self.pos += 3;
                return;
            }
            self.pos += 1;
        }
    }

    /// Consumes raw script/style content up to the matching close tag.
    fn skip_raw_text(&mut self, name: &str) {
        let close = format!("</{name}");
        let close = close.as_bytes();
        while self.pos < self.input.len() {
            if self.pos + close.len() <= self.input.len()
                && self.input[self.pos..self.pos + close.len()].eq_ignore_ascii_case(close)
            {
                self.pos += close.len();
                self.skip_until(b'>');
                return;
            }
            self.pos += 1;
        }
    }

    fn skip_until(&mut self, byte: u8) {
        while self.pos < self.input.len() {
            let c = self.input[self.pos];
            self.pos += 1;
            if c == byte {
                return;
            }
        }
    }
}

/// Decodes the common named entities plus numeric references. Unknown
/// entities are left as-is.
fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    'outer: while i < text.len() {
        if bytes[i] == b'&' {
            if let Some(end) = text[i + 1..].find(';').map(|k| i + 1 + k) {
                if end - i <= 12 {
                    let name = &text[i + 1..end];
                    let decoded = match name {
                        "amp" => Some('&'),
                        "lt" => Some('<'),
                        "gt" => Some('>'),
                        "quot" => Some('"'),
                        "apos" => Some('\''),
                        "nbsp" => Some('\u{a0}'),
                        _ => {
                            if let Some(num) = name.strip_prefix('#') {
                                let value = if let Some(hex) =
                                    num.strip_prefix('x').or_else(|| num.strip_prefix('X'))
                                {
                                    u32::from_str_radix(hex, 16).ok()
                                } else {
                                    num.parse::<u32>().ok()
                                };
                                value.and_then(char::from_u32)
                            } else {
                                None
                            }
                        }
                    };
                    if let Some(c) = decoded {
                        out.push(c);
                        i = end + 1;
                        continue 'outer;
                    }
                }
            }
        }
        let ch = text[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}
