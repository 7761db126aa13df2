use super::{is_raw_text, is_void, DomNode, DomTree, Element, ZERO_WIDTH_CHARS};

/// Serializes a tree to HTML. Output is deterministic, keeps attribute order,
/// and ends with a single LF.
pub fn serialize(tree: &DomTree) -> String {
    let mut out = String::new();
    write_element(&tree.root, &mut out);
    out.push('\n');
    out
}

fn write_element(e: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&e.tag);
    for a in e.attrs() {
        out.push(' ');
        out.push_str(&a.name);
        out.push_str("=\"");
        escape_into(&a.value, out, true);
        out.push('"');
    }
    out.push('>');
    if is_void(&e.tag) {
        return;
    }
    let raw = is_raw_text(&e.tag);
    for c in &e.children {
        match c {
            DomNode::Element(child) => write_element(child, out),
            DomNode::Text(t) if raw => out.push_str(t),
            DomNode::Text(t) => escape_into(t, out, false),
            DomNode::Comment(t) => {
                out.push_str("<!--");
                out.push_str(t);
                out.push_str("-->");
            }
        }
    }
    out.push_str("</");
    out.push_str(&e.tag);
    out.push('>');
}

fn escape_into(s: &str, out: &mut String, attribute: bool) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' if attribute => out.push_str("&quot;"),
            '<' if !attribute => out.push_str("&lt;"),
            '>' if !attribute => out.push_str("&gt;"),
            c if ZERO_WIDTH_CHARS.contains(&c) => {
                out.push_str("&#");
                out.push_str(&(c as u32).to_string());
                out.push(';');
            }
            c => out.push(c),
        }
    }
}
