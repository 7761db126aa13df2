use serde::Serialize;

use crate::dom::{visible_projection, DomTree, Element, NodePath};

use super::parse_assignments;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreservationReport {
    pub visible_equal: bool,
    pub functional_equal: bool,
    /// One entry per violation.
    pub problems: Vec<String>,
}

impl PreservationReport {
    pub fn passed(&self) -> bool {
        self.visible_equal && self.functional_equal
    }
}

/// Compares a mutated page with its original.
///
/// Appearance must be identical under the visible projection. Function is
/// checked statically: mutations never remove elements, so every original
/// element must still be at its path with the same tag, and each attribute
/// that was dropped or changed must be restored by an event handler
/// assignment of the original value. `style` is exempt; the projection
/// covers it.
pub fn preservation_check(before: &DomTree, after: &DomTree) -> PreservationReport {
    let mut problems = Vec::new();
    let visible_equal = visible_projection(before) == visible_projection(after);
    if !visible_equal {
        problems.push("visible projection differs".to_string());
    }
    for (path, old) in before.elements() {
        match after.element_at(&path) {
            Some(new) if new.tag == old.tag => check_element(&path, old, new, &mut problems),
            _ => problems.push(format!("element <{}> at {path:?} is gone", old.tag)),
        }
    }
    if before.source_url != after.source_url {
        problems.push("source url changed".to_string());
    }
    let functional_equal = problems.len() == usize::from(!visible_equal);
    PreservationReport {
        visible_equal,
        functional_equal,
        problems,
    }
}

fn check_element(path: &NodePath, old: &Element, new: &Element, problems: &mut Vec<String>) {
    let restored: Vec<(String, String)> = new
        .attrs()
        .iter()
        .filter(|a| a.name.starts_with("on"))
        .flat_map(|a| parse_assignments(&a.value))
        .collect();
    for a in old.attrs() {
        if a.name == "style" || new.attr(&a.name) == Some(a.value.as_str()) {
            continue;
        }
        if a.name.starts_with("on") {
            // an existing handler may only be extended
            if !new.attr(&a.name).is_some_and(|h| h.starts_with(a.value.trim_end())) {
                problems.push(format!("handler {} at {path:?} was altered", a.name));
            }
            continue;
        }
        if !restored.iter().any(|(n, v)| *n == a.name && *v == a.value) {
            problems.push(format!("attribute {}={:?} at {path:?} is not restored", a.name, a.value));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;
    use crate::mutation::{apply_op, modify_attribute};

    const URL: &str = "https://a.com/";

    #[test]
    fn identity_passes() {
        let t = parse_html("<form action=\"/x\"><input type=\"text\"></form>", URL);
        assert!(preservation_check(&t, &t).passed());
    }

    #[test]
    fn raw_attribute_deletion_fails() {
        let t = parse_html("<form action=\"/x\"></form>", URL);
        let mut m = t.clone();
        let p = t.elements().into_iter().find(|(_, e)| e.tag == "form").unwrap().0;
        m.element_at_mut(&p).unwrap().remove_attr("action");
        let r = preservation_check(&t, &m);
        assert!(r.visible_equal);
        assert!(!r.functional_equal);
    }

    #[test]
    fn event_rewrite_passes() {
        let t = parse_html("<form action=\"/x\" method=\"post\"></form>", URL);
        let p = t.elements().into_iter().find(|(_, e)| e.tag == "form").unwrap().0;
        let mut m = t.clone();
        apply_op(&mut m, &modify_attribute(&t, &p, "action").unwrap()).unwrap();
        assert!(preservation_check(&t, &m).passed());
    }

    #[test]
    fn visible_change_fails() {
        let t = parse_html("<p>a</p>", URL);
        let m = parse_html("<p>b</p>", URL);
        let r = preservation_check(&t, &m);
        assert!(!r.visible_equal && r.functional_equal);
    }
}
