//! Minimal stylesheet support: simple compound selectors (`tag`, `.class`,
//! `#id`, `[attr]`, `[attr=value]`) and declaration blocks, applied in source
//! order with inline styles last. Rules with combinators, pseudo-classes or
//! at-rules are ignored.

use std::collections::BTreeMap;

use super::Element;

/// Ordered `property: value` pairs.
pub type Declarations = Vec<(String, String)>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Selector {
    tag: Option<String>,
    id: Option<String>,
    classes: Vec<String>,
    attrs: Vec<(String, Option<String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rule {
    selectors: Vec<Selector>,
    decls: Declarations,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StyleSheet {
    rules: Vec<Rule>,
}

impl StyleSheet {
    pub fn parse(css: &str) -> Self {
        let css = strip_comments(css);
        let mut rules = Vec::new();
        let mut rest = css.as_str();
        while let Some(open) = rest.find('{') {
            let prelude = rest[..open].trim();
            let Some(close) = rest[open..].find('}') else {
                break;
            };
            let block = &rest[open + 1..open + close];
            rest = &rest[open + close + 1..];
            if prelude.starts_with('@') {
                continue;
            }
            let selectors: Option<Vec<Selector>> =
                prelude.split(',').map(|s| parse_selector(s.trim())).collect();
            if let Some(selectors) = selectors {
                if !selectors.is_empty() {
                    rules.push(Rule {
                        selectors,
                        decls: parse_declarations(block),
                    });
                }
            }
        }
        StyleSheet { rules }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Computed stylesheet declarations for `e` (later rules win), without
    /// its inline style.
    pub fn cascade(&self, e: &Element) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for r in &self.rules {
            if r.selectors.iter().any(|s| s.matches(e)) {
                for (p, v) in &r.decls {
                    out.insert(p.clone(), v.clone());
                }
            }
        }
        out
    }

    /// Stylesheet declarations combined with the element's inline style.
    pub fn effective_style(&self, e: &Element) -> BTreeMap<String, String> {
        let mut out = self.cascade(e);
        if let Some(inline) = e.attr("style") {
            for (p, v) in parse_declarations(inline) {
                out.insert(p, v);
            }
        }
        out
    }
}

impl Selector {
    fn matches(&self, e: &Element) -> bool {
        if let Some(t) = &self.tag {
            if *t != e.tag {
                return false;
            }
        }
        if let Some(id) = &self.id {
            if e.attr("id") != Some(id.as_str()) {
                return false;
            }
        }
        if !self.classes.is_empty() {
            let have: Vec<&str> = e.attr("class").unwrap_or("").split_whitespace().collect();
            if !self.classes.iter().all(|c| have.contains(&c.as_str())) {
                return false;
            }
        }
        self.attrs.iter().all(|(name, value)| match (e.attr(name), value) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(have), Some(want)) => have == want,
        })
    }
}

fn strip_comments(css: &str) -> String {
    let mut out = String::with_capacity(css.len());
    let mut rest = css;
    while let Some(i) = rest.find("/*") {
        out.push_str(&rest[..i]);
        rest = match rest[i + 2..].find("*/") {
            Some(j) => &rest[i + 2 + j + 2..],
            None => "",
        };
    }
    out.push_str(rest);
    out
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

fn parse_selector(s: &str) -> Option<Selector> {
    if s.is_empty() || s.contains(|c: char| c.is_whitespace() || matches!(c, '>' | '+' | '~' | ':')) {
        return None;
    }
    let mut sel = Selector::default();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let ident = |i: &mut usize| -> String {
        let start = *i;
        while *i < chars.len() && is_ident_char(chars[*i]) {
            *i += 1;
        }
        chars[start..*i].iter().collect()
    };
    if chars[0] == '*' {
        i = 1;
    } else if is_ident_char(chars[0]) {
        sel.tag = Some(ident(&mut i).to_ascii_lowercase());
    }
    while i < chars.len() {
        match chars[i] {
            '.' => {
                i += 1;
                let c = ident(&mut i);
                if c.is_empty() {
                    return None;
                }
                sel.classes.push(c);
            }
            '#' => {
                i += 1;
                let id = ident(&mut i);
                if id.is_empty() {
                    return None;
                }
                sel.id = Some(id);
            }
            '[' => {
                let close = chars[i..].iter().position(|&c| c == ']')? + i;
                let inner: String = chars[i + 1..close].iter().collect();
                i = close + 1;
                match inner.split_once('=') {
                    Some((name, value)) => {
                        // only exact-match attribute selectors are supported
                        if name.ends_with(['^', '$', '*', '~', '|']) {
                            return None;
                        }
                        let value = value.trim().trim_matches(|c| c == '"' || c == '\'');
                        sel.attrs
                            .push((name.trim().to_ascii_lowercase(), Some(value.to_string())));
                    }
                    None => sel.attrs.push((inner.trim().to_ascii_lowercase(), None)),
                }
            }
            _ => return None,
        }
    }
    Some(sel)
}

/// Parses a declaration block (`a: b; c: d`). Property names are lowercased
/// and values have internal whitespace collapsed.
pub fn parse_declarations(block: &str) -> Declarations {
    block
        .split(';')
        .filter_map(|d| {
            let (p, v) = d.split_once(':')?;
            let p = p.trim().to_ascii_lowercase();
            let v = v.split_whitespace().collect::<Vec<_>>().join(" ");
            (!p.is_empty() && !v.is_empty()).then_some((p, v))
        })
        .collect()
}

/// Renders declarations as `p:v;` pairs.
pub fn format_declarations<'a>(decls: impl IntoIterator<Item = (&'a String, &'a String)>) -> String {
    decls
        .into_iter()
        .map(|(p, v)| format!("{p}:{v};"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attribute_selector_matches() {
        let sheet = StyleSheet::parse("button[type=submit]{height:38px}");
        let b = Element::new("button").with_attr("type", "submit");
        assert_eq!(sheet.cascade(&b).get("height").map(String::as_str), Some("38px"));
        let plain = Element::new("button");
        assert!(sheet.cascade(&plain).is_empty());
    }

    #[test]
    fn later_rules_and_inline_win() {
        let sheet = StyleSheet::parse("p{color:red} .x{color:blue} /* c */ p.x{width:1px}");
        let p = Element::new("p").with_attr("class", "x y").with_attr("style", "width: 2px");
        let s = sheet.effective_style(&p);
        assert_eq!(s["color"], "blue");
        assert_eq!(s["width"], "2px");
    }

    #[test]
    fn complex_selectors_are_ignored() {
        let sheet = StyleSheet::parse("div p{color:red} a:hover{color:blue} @media x{p{color:green}}");
        let p = Element::new("p");
        assert!(sheet.cascade(&p).get("color").map_or(true, |c| c != "red" && c != "blue"));
    }

    #[test]
    fn quoted_attribute_values() {
        let sheet = StyleSheet::parse("input[type=\"password\"]{width:8px;}");
        let i = Element::new("input").with_attr("type", "password");
        assert_eq!(sheet.cascade(&i)["width"], "8px");
    }
}
