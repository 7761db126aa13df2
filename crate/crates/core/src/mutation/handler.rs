//! Function-related attributes and the event handlers that replace them.

/// Event handler used for each element with modifiable attributes, and the
/// attributes it may carry.
const MATRIX: &[(&str, &str, &[&str])] = &[
    (
        "button",
        "onclick",
        &[
            "form",
            "formaction",
            "formenctype",
            "formmethod",
            "formnovalidate",
            "formtarget",
            "name",
            "type",
            "value",
        ],
    ),
    (
        "input",
        "onfocus",
        &[
            "accept",
            "submit",
            "text",
            "type",
            "step",
            "size",
            "required",
            "name",
            "placeholder",
            "min",
            "max",
            "formtarget",
            "formnovalidate",
            "formmethod",
            "formenctype",
            "formaction",
            "form",
        ],
    ),
    (
        "form",
        "oninput",
        &["action", "enctype", "method", "name", "novalidate", "target"],
    ),
    (
        "a",
        "onclick",
        &["download", "href", "hreflang", "media", "rel", "target", "type"],
    ),
    ("table", "onmousemove", &["summary"]),
];

/// `input` types whose appearance survives losing the attribute. `text` is
/// the default rendering of an input, so removing it is invisible too.
pub const MODIFIABLE_INPUT_TYPES: &[&str] = &["reset", "button", "password", "text"];

/// Handler attribute for `tag`, if the element has modifiable attributes.
pub fn event_for(tag: &str) -> Option<&'static str> {
    MATRIX.iter().find(|(t, _, _)| *t == tag).map(|(_, e, _)| *e)
}

/// Whether `attr="value"` on `tag` can be moved into an event handler.
pub fn is_modifiable(tag: &str, attr: &str, value: &str) -> bool {
    let Some((_, _, attrs)) = MATRIX.iter().find(|(t, _, _)| *t == tag) else {
        return false;
    };
    if !attrs.contains(&attr) {
        return false;
    }
    if tag == "input" && attr == "type" {
        return MODIFIABLE_INPUT_TYPES.contains(&value.trim().to_ascii_lowercase().as_str());
    }
    true
}

/// `this.<attr>='<value>';` with `'` and `\` escaped.
pub fn assignment(attr: &str, value: &str) -> String {
    let mut out = format!("this.{attr}='");
    for c in value.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push_str("';");
    out
}

/// Parses the `this.<attr>='<value>'` assignments of a handler, in order.
/// Statements of any other shape are skipped.
pub fn parse_assignments(handler: &str) -> Vec<(String, String)> {
    let chars: Vec<char> = handler.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let skip_statement = |i: &mut usize| {
        let mut quote: Option<char> = None;
        while *i < chars.len() {
            let c = chars[*i];
            *i += 1;
            match quote {
                Some(_) if c == '\\' => *i += 1,
                Some(q) if c == q => quote = None,
                Some(_) => {}
                None if c == '\'' || c == '"' => quote = Some(c),
                None if c == ';' => return,
                None => {}
            }
        }
    };
    while i < chars.len() {
        while i < chars.len() && (chars[i].is_whitespace() || chars[i] == ';') {
            i += 1;
        }
        if i >= chars.len() {
            break;
        }
        let start = i;
        let rest: String = chars[i..].iter().take(5).collect();
        if rest != "this." {
            skip_statement(&mut i);
            continue;
        }
        i += 5;
        let name_start = i;
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        let name: String = chars[name_start..i].iter().collect();
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if name.is_empty() || i >= chars.len() || chars[i] != '=' {
            i = start;
            skip_statement(&mut i);
            continue;
        }
        i += 1;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= chars.len() || chars[i] != '\'' {
            i = start;
            skip_statement(&mut i);
            continue;
        }
        i += 1;
        let mut value = String::new();
        let mut closed = false;
        while i < chars.len() {
            let c = chars[i];
            i += 1;
            if c == '\\' && i < chars.len() {
                value.push(chars[i]);
                i += 1;
            } else if c == '\'' {
                closed = true;
                break;
            } else {
                value.push(c);
            }
        }
        if closed {
            out.push((name.to_ascii_lowercase(), value));
        }
        skip_statement(&mut i);
    }
    out
}
