use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dom::{is_void, DomTree, Element};

use super::INVISIBLE_STYLE;

/// Elements never harvested: document structure, metadata, and anything
/// that changes rendering even when hidden (stylesheets, frames).
const NOT_HARVESTED: &[&str] = &[
    "html", "head", "body", "script", "style", "link", "meta", "base", "title", "template",
    "noscript", "iframe", "frame", "frameset", "object", "embed",
];

/// An element to add: tag, attributes and an optional text child.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementSpec {
    pub tag: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ElementSpec {
    pub fn new(tag: &str) -> Self {
        ElementSpec {
            tag: tag.to_ascii_lowercase(),
            attrs: BTreeMap::new(),
            text: None,
        }
    }

    pub fn attr(mut self, name: &str, value: &str) -> Self {
        self.attrs.insert(name.to_ascii_lowercase(), value.to_string());
        self
    }

    pub fn text(mut self, text: &str) -> Self {
        self.text = Some(text.to_string());
        self
    }

    pub fn describe(&self) -> String {
        let mut s = format!("<{}", self.tag);
        for (k, v) in &self.attrs {
            s.push_str(&format!(" {k}={v:?}"));
        }
        s.push('>');
        if let Some(t) = &self.text {
            s.push_str(t);
        }
        s
    }

    /// The element with `style="display:none"`; any style in the spec is
    /// replaced.
    pub fn to_invisible_element(&self) -> Element {
        let mut e = Element::new(&self.tag);
        for (k, v) in &self.attrs {
            if k != "style" {
                e.set_attr(k, v);
            }
        }
        e.set_attr("style", INVISIBLE_STYLE);
        if let Some(t) = &self.text {
            if !is_void(&e.tag) && !t.is_empty() {
                e.children.push(crate::dom::DomNode::Text(t.clone()));
            }
        }
        e
    }

    fn from_element(e: &Element) -> Option<ElementSpec> {
        if NOT_HARVESTED.contains(&e.tag.as_str()) {
            return None;
        }
        let mut spec = ElementSpec::new(&e.tag);
        for a in e.attrs() {
            if a.name == "style" || a.name == "id" || a.name.starts_with("on") {
                continue;
            }
            spec.attrs.insert(a.name.clone(), a.value.clone());
        }
        if !is_void(&e.tag) {
            let text = e.text_children().collect::<Vec<_>>().join(" ");
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            if !text.is_empty() {
                spec.text = Some(text);
            }
        }
        Some(spec)
    }

    fn matches(&self, e: &Element) -> bool {
        ElementSpec::from_element(e).is_some_and(|s| s == *self)
    }
}

/// Element specs taken from legitimate pages, the material for blind
/// additions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdditionPool {
    pub specs: Vec<ElementSpec>,
}

impl AdditionPool {
    pub fn new(specs: Vec<ElementSpec>) -> Self {
        AdditionPool { specs }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Distinct element specs of every harvestable element, in first-seen
    /// order.
    pub fn harvest<'a>(pages: impl IntoIterator<Item = &'a DomTree>) -> Self {
        let mut seen = BTreeSet::new();
        let mut specs = Vec::new();
        for page in pages {
            for (_, e) in page.elements() {
                if let Some(spec) = ElementSpec::from_element(e) {
                    if seen.insert(spec.clone()) {
                        specs.push(spec);
                    }
                }
            }
        }
        AdditionPool { specs }
    }

    /// Specs with no identical element already in `tree`.
    pub fn absent_from(&self, tree: &DomTree) -> Vec<ElementSpec> {
        let present: Vec<&Element> = tree.elements().into_iter().map(|(_, e)| e).collect();
        self.specs
            .iter()
            .filter(|s| !present.iter().any(|e| s.matches(e)))
            .cloned()
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut specs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let spec: ElementSpec = serde_json::from_str(line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            specs.push(spec);
        }
        Ok(AdditionPool { specs })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut text = String::new();
        for s in &self.specs {
            text.push_str(&serde_json::to_string(s).expect("spec serializes"));
            text.push('\n');
        }
        fs::write(path, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_html, visible_projection};
    use crate::mutation::{add_invisible_element, apply_op};

    #[test]
    fn harvest_skips_structure_and_handlers() {
        let page = parse_html(
            "<html><head><title>t</title><style>p{}</style></head><body>\
             <p class=\"c\" onclick=\"x()\" id=\"i\">Privacy  policy</p><img src=\"/a.png\"><p class=\"c\">Privacy policy</p></body></html>",
            "https://a.com/",
        );
        let pool = AdditionPool::harvest([&page]);
        assert_eq!(
            pool.specs,
            vec![
                ElementSpec::new("p").attr("class", "c").text("Privacy policy"),
                ElementSpec::new("img").attr("src", "/a.png"),
            ]
        );
        assert!(pool.absent_from(&page).is_empty());
    }

    #[test]
    fn harvested_specs_stay_invisible() {
        let legit = parse_html(
            "<body><div align=\"center\"><a href=\"/terms\">Terms</a><input type=\"checkbox\"></div></body>",
            "https://a.com/",
        );
        let target = parse_html("<html><body><p>hi</p></body></html>", "https://b.com/");
        for spec in AdditionPool::harvest([&legit]).specs {
            let mut m = target.clone();
            apply_op(&mut m, &add_invisible_element(&target, &spec)).unwrap();
            assert_eq!(visible_projection(&m), visible_projection(&target), "{}", spec.describe());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pool.jsonl");
        let pool = AdditionPool::new(vec![
            ElementSpec::new("a").attr("href", "https://x.com/"),
            ElementSpec::new("span").text("hello \"world\""),
        ]);
        pool.save(&p).unwrap();
        assert_eq!(AdditionPool::load(&p).unwrap(), pool);
        let line = std::fs::read_to_string(&p).unwrap();
        assert!(line.starts_with("{\"tag\":\"a\",\"attrs\":{\"href\":\"https://x.com/\"}}"));
    }
}
