//! Appearance- and function-preserving page mutations.
//!
//! Three node operations exist:
//!
//! * attribute modification moves a function-related attribute into an
//!   equivalent event handler (`this.type='submit';`) and pins any style
//!   the attribute used to select through an inline `style`;
//! * text modification splits a term with a zero-width space;
//! * invisible addition appends a `display:none` element under `body`.
//!
//! [`Planner`] turns "delete this feature" and "make this rule hit" into
//! sequences of these operations. [`preservation_check`] verifies a
//! mutated page against its original.

mod handler;
mod planner;
mod pool;
mod preserve;

pub use handler::{assignment, event_for, is_modifiable, parse_assignments, MODIFIABLE_INPUT_TYPES};
pub use planner::{modification_sites, plan_site, Planner, Site};
pub use pool::{AdditionPool, ElementSpec};
pub use preserve::{preservation_check, PreservationReport};

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::dom::{format_declarations, parse_declarations, DomNode, DomTree, Element, NodePath};

/// The character inserted into terms.
pub const ZERO_WIDTH_SPACE: char = '\u{200B}';

/// Inline style of every added element.
pub const INVISIBLE_STYLE: &str = "display:none";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("cannot modify {attr:?} on <{tag}>: {reason}")]
    Unsupported {
        tag: String,
        attr: String,
        reason: String,
    },
    #[error("feature {0} cannot be deleted")]
    Undeletable(String),
    #[error("term {0:?} not found")]
    TermNotFound(String),
    #[error("no split of term {0:?} avoids the guarded features")]
    TermGuarded(String),
    #[error("feature {0} is not present")]
    FeatureAbsent(String),
    #[error("url feature {0} cannot be added")]
    UrlFeatureUnaddable(String),
    #[error("feature {0:?} has unknown semantics")]
    UnknownFeature(String),
    #[error("path {0:?} does not resolve")]
    Path(NodePath),
    #[error("plan did not achieve its goal: {0}")]
    NotAchieved(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOpKind {
    ModifyAttribute,
    ModifyText,
    AddInvisibleElement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeOp {
    /// Removes `attr` (currently `value`), appends the assignment to the
    /// `event` handler and, when needed, replaces the inline style.
    ModifyAttribute {
        target: NodePath,
        attr: String,
        value: String,
        event: String,
        style: Option<String>,
    },
    /// Inserts a zero-width space `at` characters into the first
    /// whitespace-delimited occurrence of `term` in the text node.
    ModifyText {
        target: NodePath,
        term: String,
        at: usize,
    },
    /// Appends the element, made invisible, as the last child of `parent`.
    AddInvisibleElement { parent: NodePath, spec: ElementSpec },
}

impl NodeOp {
    pub fn kind(&self) -> NodeOpKind {
        match self {
            NodeOp::ModifyAttribute { .. } => NodeOpKind::ModifyAttribute,
            NodeOp::ModifyText { .. } => NodeOpKind::ModifyText,
            NodeOp::AddInvisibleElement { .. } => NodeOpKind::AddInvisibleElement,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NodeOp::ModifyAttribute { target, attr, value, event, .. } => {
                format!("modify {attr}={value:?} at {target:?} via {event}")
            }
            NodeOp::ModifyText { target, term, .. } => format!("split term {term:?} at {target:?}"),
            NodeOp::AddInvisibleElement { spec, .. } => format!("add invisible {}", spec.describe()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MutationPlan {
    pub ops: Vec<NodeOp>,
    /// What the plan serves: a feature, a rule, or `blind`.
    pub provenance: String,
}

impl MutationPlan {
    pub fn new(provenance: impl Into<String>) -> Self {
        MutationPlan {
            ops: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn additions(&self) -> usize {
        self.ops
            .iter()
            .filter(|o| o.kind() == NodeOpKind::AddInvisibleElement)
            .count()
    }

    pub fn describe(&self) -> String {
        let kinds: BTreeSet<&str> = self
            .ops
            .iter()
            .map(|o| match o.kind() {
                NodeOpKind::ModifyAttribute => "modify-attribute",
                NodeOpKind::ModifyText => "modify-text",
                NodeOpKind::AddInvisibleElement => "add",
            })
            .collect();
        format!(
            "{} ({} ops: {})",
            self.provenance,
            self.ops.len(),
            kinds.into_iter().collect::<Vec<_>>().join(", ")
        )
    }
}

fn unsupported(tag: &str, attr: &str, reason: &str) -> MutationError {
    MutationError::Unsupported {
        tag: tag.to_string(),
        attr: attr.to_string(),
        reason: reason.to_string(),
    }
}

/// Element as it looks after `op`'s attribute rewrite, without touching the
/// tree.
fn rewritten(e: &Element, attr: &str, value: &str, event: &str, style: Option<&str>) -> Element {
    let mut out = e.clone();
    out.remove_attr(attr);
    if let Some(style) = style {
        if style.is_empty() {
            out.remove_attr("style");
        } else {
            out.set_attr("style", style);
        }
    }
    let handler = match out.attr(event) {
        Some(h) if !h.trim().is_empty() => {
            let h = h.trim_end();
            let sep = if h.ends_with(';') { "" } else { ";" };
            format!("{h}{sep}{}", assignment(attr, value))
        }
        _ => assignment(attr, value),
    };
    out.set_attr(event, &handler);
    out
}

/// Plans moving `attr` of the element at `path` into its event handler.
pub fn modify_attribute(tree: &DomTree, path: &[usize], attr: &str) -> Result<NodeOp, MutationError> {
    let e = tree
        .element_at(path)
        .ok_or_else(|| MutationError::Path(path.to_vec()))?;
    let value = e
        .attr(attr)
        .ok_or_else(|| unsupported(&e.tag, attr, "attribute not present"))?;
    let event = event_for(&e.tag).ok_or_else(|| unsupported(&e.tag, attr, "element has no modifiable attributes"))?;
    if !is_modifiable(&e.tag, attr, value) {
        return Err(unsupported(&e.tag, attr, "attribute is tied to appearance"));
    }
    let sheet = tree.stylesheet();
    let before = sheet.effective_style(e);
    let plain = rewritten(e, attr, value, event, None);
    let after = sheet.effective_style(&plain);
    let style = if before == after {
        None
    } else {
        if after.keys().any(|k| !before.contains_key(k)) {
            return Err(unsupported(&e.tag, attr, "handler attribute introduces new styles"));
        }
        let mut decls = parse_declarations(plain.attr("style").unwrap_or(""));
        for (p, v) in &before {
            if after.get(p) != Some(v) {
                match decls.iter_mut().find(|(q, _)| q == p) {
                    Some(d) => d.1 = v.clone(),
                    None => decls.push((p.clone(), v.clone())),
                }
            }
        }
        let text = format_declarations(decls.iter().map(|(p, v)| (p, v)));
        let fixed = rewritten(e, attr, value, event, Some(&text));
        if sheet.effective_style(&fixed) != before {
            return Err(unsupported(&e.tag, attr, "style cannot be reproduced inline"));
        }
        Some(text)
    };
    Ok(NodeOp::ModifyAttribute {
        target: path.to_vec(),
        attr: attr.to_string(),
        value: value.to_string(),
        event: event.to_string(),
        style,
    })
}

/// Whitespace-delimited tokens with their byte offsets.
pub(crate) fn tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

/// Split positions to try: the midpoint first, then later, then earlier.
fn split_candidates(len: usize) -> Vec<usize> {
    if len < 2 {
        return vec![1];
    }
    let mid = len.div_ceil(2);
    (mid..len).chain(1..mid).collect()
}

fn insert_at(term: &str, at: usize) -> String {
    let mut out = String::with_capacity(term.len() + 3);
    for (i, c) in term.chars().enumerate() {
        if i == at {
            out.push(ZERO_WIDTH_SPACE);
        }
        out.push(c);
    }
    if at >= term.chars().count() {
        out.push(ZERO_WIDTH_SPACE);
    }
    out
}

/// Plans splitting `term` in the text node at `path`. The resulting token
/// must not be one of the `guard` features (canonical strings); other split
/// points are tried when it is.
pub fn modify_text(
    tree: &DomTree,
    path: &[usize],
    term: &str,
    guard: &BTreeSet<String>,
) -> Result<NodeOp, MutationError> {
    let text = tree
        .node_at(path)
        .and_then(DomNode::as_text)
        .ok_or_else(|| MutationError::Path(path.to_vec()))?;
    if !tokens(text).iter().any(|(_, t)| *t == term) {
        return Err(MutationError::TermNotFound(term.to_string()));
    }
    for at in split_candidates(term.chars().count()) {
        let fragment = format!("PageTerm={}", insert_at(term, at));
        if !guard.contains(&fragment) {
            return Ok(NodeOp::ModifyText {
                target: path.to_vec(),
                term: term.to_string(),
                at,
            });
        }
    }
    Err(MutationError::TermGuarded(term.to_string()))
}

/// Plans appending `spec` invisibly under the first `body` (or the root).
pub fn add_invisible_element(tree: &DomTree, spec: &ElementSpec) -> NodeOp {
    NodeOp::AddInvisibleElement {
        parent: tree.body_path(),
        spec: spec.clone(),
    }
}

/// Applies one operation in place.
pub fn apply_op(tree: &mut DomTree, op: &NodeOp) -> Result<(), MutationError> {
    match op {
        NodeOp::ModifyAttribute { target, attr, value, event, style } => {
            let e = tree
                .element_at_mut(target)
                .ok_or_else(|| MutationError::Path(target.clone()))?;
            if e.attr(attr) != Some(value.as_str()) {
                return Err(MutationError::Path(target.clone()));
            }
            *e = rewritten(e, attr, value, event, style.as_deref());
        }
        NodeOp::ModifyText { target, term, at } => {
            let node = tree
                .node_at_mut(target)
                .ok_or_else(|| MutationError::Path(target.clone()))?;
            let DomNode::Text(text) = node else {
                return Err(MutationError::Path(target.clone()));
            };
            let (start, _) = tokens(text)
                .into_iter()
                .find(|(_, t)| t == term)
                .ok_or_else(|| MutationError::TermNotFound(term.clone()))?;
            let replaced = insert_at(term, *at);
            text.replace_range(start..start + term.len(), &replaced);
        }
        NodeOp::AddInvisibleElement { parent, spec } => {
            let p = tree
                .element_at_mut(parent)
                .ok_or_else(|| MutationError::Path(parent.clone()))?;
            p.children.push(DomNode::Element(spec.to_invisible_element()));
        }
    }
    Ok(())
}

/// Applies a plan to a copy of `tree`.
pub fn apply(tree: &DomTree, plan: &MutationPlan) -> Result<DomTree, MutationError> {
    let mut out = tree.clone();
    for op in &plan.ops {
        apply_op(&mut out, op)?;
    }
    Ok(out)
}
