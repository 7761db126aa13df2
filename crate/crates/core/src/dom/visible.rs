//! Static appearance model.
//!
//! A [`VisibleProjection`] lists what a page shows: visible elements with
//! their appearance attributes, and visible text with zero-width characters
//! removed. Two pages with equal projections are treated as rendering the
//! same. Styles are the stylesheet cascade plus the inline `style`, so moving
//! a declaration from a stylesheet rule into an inline style does not change
//! the projection.

use std::collections::BTreeMap;

use super::{format_declarations, strip_zero_width, DomNode, DomTree, Element, StyleSheet};

/// Attributes that influence rendering. Everything else is ignored.
pub const APPEARANCE_ATTRIBUTES: &[&str] =
    &["style", "class", "align", "background", "src", "width", "height", "color"];

/// Elements whose content is never rendered.
const NON_RENDERED: &[&str] = &["script", "style", "template"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleItem {
    /// Element tag, or `#text` for text nodes.
    pub tag: String,
    pub text: String,
    pub appearance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisibleProjection {
    pub items: Vec<VisibleItem>,
}

impl VisibleProjection {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// True when the element's own style hides it and its whole subtree.
pub fn is_hidden(e: &Element, sheet: &StyleSheet) -> bool {
    let style = sheet.effective_style(e);
    let is = |p: &str, v: &str| style.get(p).is_some_and(|x| x.eq_ignore_ascii_case(v));
    let zero = |p: &str| {
        style
            .get(p)
            .is_some_and(|x| x.trim_end_matches("px").trim().parse::<f64>() == Ok(0.0))
    };
    is("display", "none") || is("visibility", "hidden") || (zero("width") && zero("height"))
}

pub fn visible_projection(tree: &DomTree) -> VisibleProjection {
    let sheet = tree.stylesheet();
    let mut items = Vec::new();
    walk(&tree.root, &sheet, &mut items);
    VisibleProjection { items }
}

fn walk(e: &Element, sheet: &StyleSheet, items: &mut Vec<VisibleItem>) {
    if is_hidden(e, sheet) {
        return;
    }
    let mut appearance = BTreeMap::new();
    for a in e.attrs() {
        if a.name != "style" && APPEARANCE_ATTRIBUTES.contains(&a.name.as_str()) {
            appearance.insert(a.name.clone(), a.value.clone());
        }
    }
    let style = sheet.effective_style(e);
    if !style.is_empty() {
        appearance.insert("style".to_string(), format_declarations(&style));
    }
    items.push(VisibleItem {
        tag: e.tag.clone(),
        text: String::new(),
        appearance,
    });
    if NON_RENDERED.contains(&e.tag.as_str()) {
        return;
    }
    for c in &e.children {
        match c {
            DomNode::Element(child) => walk(child, sheet, items),
            DomNode::Text(t) => {
                let text = strip_zero_width(t);
                if !text.is_empty() {
                    items.push(VisibleItem {
                        tag: "#text".to_string(),
                        text,
                        appearance: BTreeMap::new(),
                    });
                }
            }
            DomNode::Comment(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;

    const URL: &str = "http://example.com/";

    fn proj(html: &str) -> VisibleProjection {
        visible_projection(&parse_html(html, URL))
    }

    #[test]
    fn hidden_div_is_excluded() {
        let a = proj("<html><body><p>hi</p></body></html>");
        let b = proj("<html><body><p>hi</p><div style=\"display:none\">x</div></body></html>");
        assert_eq!(a, b);
    }

    #[test]
    fn zero_width_space_is_invisible() {
        assert_eq!(proj("<p>Hell&#8203;o</p>"), proj("<p>Hello</p>"));
    }

    #[test]
    fn event_handlers_are_not_appearance() {
        assert_eq!(
            proj("<button type=\"submit\">Go</button>"),
            proj("<button onclick=\"this.type='submit';\">Go</button>")
        );
    }

    #[test]
    fn stylesheet_and_inline_style_are_equivalent() {
        let a = proj("<style>button[type=submit]{height:38px}</style><button type=\"submit\"></button>");
        let b = proj("<style>button[type=submit]{height:38px}</style><button style=\"height:38px;\" onclick=\"this.type='submit';\"></button>");
        assert_eq!(a, b);
    }

    #[test]
    fn visibility_and_zero_size_hide() {
        let base = proj("<p>a</p>");
        assert_eq!(base, proj("<p>a</p><span style=\"visibility: hidden\">b</span>"));
        assert_eq!(base, proj("<p>a</p><img src=x style=\"width:0;height:0px\">"));
        assert_ne!(base, proj("<p>a</p><img src=x style=\"width:0\">"));
    }

    #[test]
    fn appearance_changes_are_visible() {
        assert_ne!(proj("<p align=left>a</p>"), proj("<p>a</p>"));
        assert_ne!(proj("<p>a</p>"), proj("<p>b</p>"));
    }
}
