//! DOM trees for static HTML documents.
//!
//! The parser is tag-soup tolerant and keeps exactly what feature extraction
//! and mutation need: element tags, ordered attributes, text and comments.
//! No scripting, no CSS cascade beyond the simple selectors used by the
//! visibility model in [`visible`].

mod css;
mod parser;
mod serialize;
pub mod visible;

pub use css::{format_declarations, parse_declarations, Declarations, StyleSheet};
pub use parser::{decode_entities, parse_html, parse_html_bytes};
pub use serialize::serialize;
pub use visible::{visible_projection, VisibleItem, VisibleProjection};

use std::collections::VecDeque;

use thiserror::Error;

/// Child-index sequence from the root element.
pub type NodePath = Vec<usize>;

/// Zero-width characters treated as invisible by the appearance model.
pub const ZERO_WIDTH_CHARS: [char; 4] = ['\u{200B}', '\u{200C}', '\u{200D}', '\u{FEFF}'];

/// Elements that never have children or an end tag.
pub const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source",
    "track", "wbr",
];

/// Elements whose content is raw text (not parsed, not escaped).
pub const RAW_TEXT_ELEMENTS: &[&str] = &["script", "style"];

pub fn is_void(tag: &str) -> bool {
    VOID_ELEMENTS.contains(&tag)
}

pub fn is_raw_text(tag: &str) -> bool {
    RAW_TEXT_ELEMENTS.contains(&tag)
}

#[derive(Debug, Error)]
pub enum DomError {
    #[error("document is not valid UTF-8: {0}")]
    Parse(#[from] std::str::Utf8Error),
    #[error("path {0:?} does not resolve to the expected node")]
    Path(NodePath),
}

/// Node categories of the document model. Attributes are stored on their
/// owning [`Element`] rather than as free-standing children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Element,
    Attribute,
    Text,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub tag: String,
    attrs: Vec<Attribute>,
    pub children: Vec<DomNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomNode {
    Element(Element),
    Text(String),
    Comment(String),
}

impl DomNode {
    pub fn kind(&self) -> NodeKind {
        match self {
            DomNode::Element(_) => NodeKind::Element,
            DomNode::Text(_) => NodeKind::Text,
            DomNode::Comment(_) => NodeKind::Comment,
        }
    }

    pub fn as_element(&self) -> Option<&Element> {
        match self {
            DomNode::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_element_mut(&mut self) -> Option<&mut Element> {
        match self {
            DomNode::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            DomNode::Text(t) => Some(t),
            _ => None,
        }
    }
}

impl Element {
    /// Creates an element; the tag is lowercased.
    pub fn new(tag: &str) -> Self {
        Element {
            tag: tag.to_ascii_lowercase(),
            attrs: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_attr(mut self, name: &str, value: &str) -> Self {
        self.set_attr(name, value);
        self
    }

    pub fn with_text(mut self, text: &str) -> Self {
        self.children.push(DomNode::Text(text.to_string()));
        self
    }

    pub fn with_child(mut self, child: Element) -> Self {
        self.children.push(DomNode::Element(child));
        self
    }

    pub fn attrs(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.value.as_str())
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attr(name).is_some()
    }

    /// Sets an attribute, replacing the value in place when the name exists
    /// so attribute order is preserved.
    pub fn set_attr(&mut self, name: &str, value: &str) {
        let name = name.to_ascii_lowercase();
        match self.attrs.iter_mut().find(|a| a.name == name) {
            Some(a) => a.value = value.to_string(),
            None => self.attrs.push(Attribute {
                name,
                value: value.to_string(),
            }),
        }
    }

    /// Adds an attribute only if the name is not already present.
    pub(crate) fn push_attr_if_absent(&mut self, name: String, value: String) {
        if !self.attrs.iter().any(|a| a.name == name) {
            self.attrs.push(Attribute { name, value });
        }
    }

    pub fn remove_attr(&mut self, name: &str) -> Option<String> {
        let idx = self.attrs.iter().position(|a| a.name == name)?;
        Some(self.attrs.remove(idx).value)
    }

    pub fn element_children(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(DomNode::as_element)
    }

    /// Values of the direct text children.
    pub fn text_children(&self) -> impl Iterator<Item = &str> {
        self.children.iter().filter_map(DomNode::as_text)
    }

    /// Number of element nodes in this subtree, including `self`.
    pub fn element_count(&self) -> usize {
        1 + self
            .element_children()
            .map(Element::element_count)
            .sum::<usize>()
    }
}

/// A parsed document together with the URL it was served from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    pub root: Element,
    pub source_url: String,
}

impl DomTree {
    pub fn new(root: Element, source_url: &str) -> Self {
        DomTree {
            root,
            source_url: source_url.to_string(),
        }
    }

    pub fn parse(text: &str, url: &str) -> Self {
        parse_html(text, url)
    }

    pub fn to_html(&self) -> String {
        serialize(self)
    }

    pub fn node_at(&self, path: &[usize]) -> Option<&DomNode> {
        let (last, prefix) = path.split_last()?;
        let parent = self.element_at(prefix)?;
        parent.children.get(*last)
    }

    pub fn element_at(&self, path: &[usize]) -> Option<&Element> {
        let mut cur = &self.root;
        for &i in path {
            cur = cur.children.get(i)?.as_element()?;
        }
        Some(cur)
    }

    pub fn element_at_mut(&mut self, path: &[usize]) -> Option<&mut Element> {
        let mut cur = &mut self.root;
        for &i in path {
            cur = cur.children.get_mut(i)?.as_element_mut()?;
        }
        Some(cur)
    }

    pub fn node_at_mut(&mut self, path: &[usize]) -> Option<&mut DomNode> {
        let (last, prefix) = path.split_last()?;
        let parent = self.element_at_mut(prefix)?;
        parent.children.get_mut(*last)
    }

    /// All elements with their paths, in document (pre-)order.
    pub fn elements(&self) -> Vec<(NodePath, &Element)> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Element, path: &mut NodePath, out: &mut Vec<(NodePath, &'a Element)>) {
            out.push((path.clone(), e));
            for (i, c) in e.children.iter().enumerate() {
                if let DomNode::Element(child) = c {
                    path.push(i);
                    walk(child, path, out);
                    path.pop();
                }
            }
        }
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Text nodes with their paths and the tag of their parent, in document order.
    pub fn text_nodes(&self) -> Vec<(NodePath, &str, &str)> {
        let mut out = Vec::new();
        for (path, e) in self.elements() {
            for (i, c) in e.children.iter().enumerate() {
                if let DomNode::Text(t) = c {
                    let mut p = path.clone();
                    p.push(i);
                    out.push((p, t.as_str(), e.tag.as_str()));
                }
            }
        }
        out
    }

    pub fn element_count(&self) -> usize {
        self.root.element_count()
    }

    /// Path of the first `body` element in breadth-first order, or the root
    /// when the document has none.
    pub fn body_path(&self) -> NodePath {
        let mut queue: VecDeque<(NodePath, &Element)> = VecDeque::new();
        queue.push_back((Vec::new(), &self.root));
        while let Some((path, e)) = queue.pop_front() {
            if e.tag == "body" {
                return path;
            }
            for (i, c) in e.children.iter().enumerate() {
                if let DomNode::Element(child) = c {
                    let mut p = path.clone();
                    p.push(i);
                    queue.push_back((p, child));
                }
            }
        }
        Vec::new()
    }

    /// Concatenated contents of every `<style>` element.
    pub fn stylesheet(&self) -> StyleSheet {
        let mut css = String::new();
        for (_, e) in self.elements() {
            if e.tag == "style" {
                for t in e.text_children() {
                    css.push_str(t);
                    css.push('\n');
                }
            }
        }
        StyleSheet::parse(&css)
    }
}

/// Breadth-first layering of the element nodes: layer 1 is the root, layer
/// `i + 1` holds the element children of layer `i` in document order.
pub fn bfs_layers(tree: &DomTree) -> Vec<Vec<&Element>> {
    let mut layers = Vec::new();
    let mut current = vec![&tree.root];
    while !current.is_empty() {
        let next: Vec<&Element> = current
            .iter()
            .flat_map(|e| e.element_children())
            .collect();
        layers.push(current);
        current = next;
    }
    layers
}

/// Removes the zero-width characters from `text`.
pub fn strip_zero_width(text: &str) -> String {
    text.chars()
        .filter(|c| !ZERO_WIDTH_CHARS.contains(c))
        .collect()
}
