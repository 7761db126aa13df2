use super::{is_raw_text, is_void, DomError, DomNode, DomTree, Element};

/// Tags that implicitly close an open `<p>`.
const CLOSES_P: &[&str] = &[
    "address", "article", "aside", "blockquote", "div", "dl", "fieldset", "footer", "form", "h1",
    "h2", "h3", "h4", "h5", "h6", "header", "hr", "main", "nav", "ol", "p", "pre", "section",
    "table", "ul",
];

/// Elements whose content is text with entity decoding but no markup.
const ESCAPABLE_RAW_TEXT: &[&str] = &["title", "textarea"];

#[derive(Debug)]
enum Token {
    Start {
        name: String,
        attrs: Vec<(String, String)>,
        self_closing: bool,
    },
    End(String),
    Text(String),
    Comment(String),
}

/// Parses raw bytes, rejecting input that is not UTF-8.
pub fn parse_html_bytes(bytes: &[u8], url: &str) -> Result<DomTree, DomError> {
    let text = std::str::from_utf8(bytes)?;
    Ok(parse_html(text, url))
}

/// Parses an HTML document. Never fails: unclosed tags are closed at end of
/// input, stray end tags are dropped, and an empty document yields an empty
/// `html` root.
pub fn parse_html(text: &str, url: &str) -> DomTree {
    let tokens = tokenize(text);
    let mut builder = TreeBuilder::new();
    for tok in tokens {
        builder.feed(tok);
    }
    DomTree::new(builder.finish(), url)
}

fn tokenize(input: &str) -> Vec<Token> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut text_start = 0;

    let flush_text = |tokens: &mut Vec<Token>, from: usize, to: usize| {
        if to > from {
            tokens.push(Token::Text(decode_entities(&input[from..to])));
        }
    };

    while pos < bytes.len() {
        if bytes[pos] != b'<' {
            pos += 1;
            continue;
        }
        let rest = &input[pos..];
        let next = bytes.get(pos + 1).copied();
        if rest.starts_with("<!--") {
            flush_text(&mut tokens, text_start, pos);
            let body_start = pos + 4;
            let (body_end, after) = match input[body_start..].find("-->") {
                Some(i) => (body_start + i, body_start + i + 3),
                None => (input.len(), input.len()),
            };
            tokens.push(Token::Comment(input[body_start..body_end].to_string()));
            pos = after;
            text_start = pos;
        } else if matches!(next, Some(b'!') | Some(b'?')) {
            // doctype, processing instruction or bogus comment: skipped
            flush_text(&mut tokens, text_start, pos);
            pos = match input[pos..].find('>') {
                Some(i) => pos + i + 1,
                None => input.len(),
            };
            text_start = pos;
        } else if next == Some(b'/') && bytes.get(pos + 2).is_some_and(u8::is_ascii_alphabetic) {
            flush_text(&mut tokens, text_start, pos);
            let name_start = pos + 2;
            let name_end = scan_name(bytes, name_start);
            let name = input[name_start..name_end].to_ascii_lowercase();
            pos = match input[name_end..].find('>') {
                Some(i) => name_end + i + 1,
                None => input.len(),
            };
            tokens.push(Token::End(name));
            text_start = pos;
        } else if next.is_some_and(|b| b.is_ascii_alphabetic()) {
            flush_text(&mut tokens, text_start, pos);
            let (tok, after) = read_start_tag(input, pos + 1);
            pos = after;
            let raw_name = match &tok {
                Token::Start {
                    name,
                    self_closing: false,
                    ..
                } if is_raw_text(name) || ESCAPABLE_RAW_TEXT.contains(&name.as_str()) => {
                    Some(name.clone())
                }
                _ => None,
            };
            tokens.push(tok);
            if let Some(name) = raw_name {
                let close = find_close_tag(input, pos, &name).unwrap_or(input.len());
                if close > pos {
                    let raw = &input[pos..close];
                    let content = if is_raw_text(&name) {
                        raw.to_string()
                    } else {
                        decode_entities(raw)
                    };
                    tokens.push(Token::Text(content));
                }
                pos = close;
            }
            text_start = pos;
        } else {
            pos += 1;
        }
    }
    flush_text(&mut tokens, text_start, bytes.len());
    tokens
}

fn scan_name(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'/' && bytes[i] != b'>'
    {
        i += 1;
    }
    i
}

/// Finds the byte offset of `</name` (ASCII case-insensitive) at or after `from`.
fn find_close_tag(input: &str, from: usize, name: &str) -> Option<usize> {
    let hay = input.as_bytes();
    let needle_len = name.len() + 2;
    let mut i = from;
    while i + needle_len <= hay.len() {
        if hay[i] == b'<'
            && hay[i + 1] == b'/'
            && hay[i + 2..i + needle_len].eq_ignore_ascii_case(name.as_bytes())
        {
            let after = hay.get(i + needle_len).copied();
            if after.map_or(true, |b| b.is_ascii_whitespace() || b == b'>' || b == b'/') {
                return Some(i);
            }
        }
        i += 1;
    }
    None
}

/// Reads a start tag beginning at the tag name; returns the token and the
/// offset just past the closing `>`.
fn read_start_tag(input: &str, name_start: usize) -> (Token, usize) {
    let bytes = input.as_bytes();
    let name_end = scan_name(bytes, name_start);
    let name = input[name_start..name_end].to_ascii_lowercase();
    let mut attrs: Vec<(String, String)> = Vec::new();
    let mut i = name_end;
    let mut self_closing = false;
    loop {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'/') {
            self_closing = bytes[i] == b'/';
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        if bytes[i] == b'>' {
            i += 1;
            break;
        }
        self_closing = false;
        let an_start = i;
        while i < bytes.len()
            && !bytes[i].is_ascii_whitespace()
            && !matches!(bytes[i], b'=' | b'>' | b'/')
        {
            i += 1;
        }
        if i == an_start {
            // stray '=' with no name
            i += 1;
            continue;
        }
        let attr_name = input[an_start..i].to_ascii_lowercase();
        let mut j = i;
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        let mut value = String::new();
        if j < bytes.len() && bytes[j] == b'=' {
            j += 1;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if j < bytes.len() && (bytes[j] == b'"' || bytes[j] == b'\'') {
                let quote = bytes[j] as char;
                let v_start = j + 1;
                let v_end = input[v_start..]
                    .find(quote)
                    .map_or(input.len(), |k| v_start + k);
                value = decode_entities(&input[v_start..v_end]);
                i = (v_end + 1).min(input.len());
            } else {
                let v_start = j;
                while j < bytes.len() && !bytes[j].is_ascii_whitespace() && bytes[j] != b'>' {
                    j += 1;
                }
                value = decode_entities(&input[v_start..j]);
                i = j;
            }
        }
        if !attrs.iter().any(|(n, _)| *n == attr_name) {
            attrs.push((attr_name, value));
        }
    }
    (
        Token::Start {
            name,
            attrs,
            self_closing,
        },
        i,
    )
}

/// Decodes the character references this parser understands. Unknown or
/// unterminated references are left as literal text.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let semi = rest[1..].find(';').map(|i| i + 1);
        let decoded = semi
            .filter(|&i| i <= 32)
            .and_then(|i| decode_reference(&rest[1..i]).map(|c| (c, i)));
        match decoded {
            Some((c, i)) => {
                out.push(c);
                rest = &rest[i + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_reference(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix('x').or_else(|| num.strip_prefix('X')) {
            u32::from_str_radix(hex, 16).ok()?
        } else {
            num.parse::<u32>().ok()?
        };
        return Some(char::from_u32(code).unwrap_or('\u{FFFD}'));
    }
    let c = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{A0}',
        "copy" => '\u{A9}',
        "reg" => '\u{AE}',
        "trade" => '\u{2122}',
        "hellip" => '\u{2026}',
        "mdash" => '\u{2014}',
        "ndash" => '\u{2013}',
        "laquo" => '\u{AB}',
        "raquo" => '\u{BB}',
        "zwsp" => '\u{200B}',
        "zwnj" => '\u{200C}',
        "zwj" => '\u{200D}',
        _ => return None,
    };
    Some(c)
}

struct TreeBuilder {
    // stack[0] is the synthetic document container
    stack: Vec<Element>,
}

impl TreeBuilder {
    fn new() -> Self {
        TreeBuilder {
            stack: vec![Element::new("#document")],
        }
    }

    fn top(&self) -> &Element {
        self.stack.last().expect("document container")
    }

    fn top_mut(&mut self) -> &mut Element {
        self.stack.last_mut().expect("document container")
    }

    fn pop(&mut self) {
        if self.stack.len() > 1 {
            let e = self.stack.pop().expect("non-empty");
            self.top_mut().children.push(DomNode::Element(e));
        }
    }

    fn feed(&mut self, tok: Token) {
        match tok {
            Token::Start {
                name,
                attrs,
                self_closing,
            } => {
                self.implied_end(&name);
                let mut e = Element::new(&name);
                for (n, v) in attrs {
                    e.push_attr_if_absent(n, v);
                }
                if self_closing || is_void(&name) {
                    self.top_mut().children.push(DomNode::Element(e));
                } else {
                    self.stack.push(e);
                }
            }
            Token::End(name) => {
                if let Some(idx) = self.stack.iter().rposition(|e| e.tag == name) {
                    if idx > 0 {
                        while self.stack.len() > idx {
                            self.pop();
                        }
                    }
                }
            }
            Token::Text(t) => {
                if t.trim().is_empty() {
                    return;
                }
                let top = self.top_mut();
                if let Some(DomNode::Text(prev)) = top.children.last_mut() {
                    prev.push_str(&t);
                } else {
                    top.children.push(DomNode::Text(t));
                }
            }
            Token::Comment(c) => self.top_mut().children.push(DomNode::Comment(c)),
        }
    }

    fn implied_end(&mut self, name: &str) {
        let top = self.top().tag.as_str();
        let close = match name {
            "li" => top == "li",
            "dt" | "dd" => matches!(top, "dt" | "dd"),
            "option" => top == "option",
            "td" | "th" => matches!(top, "td" | "th"),
            "tr" => {
                if matches!(top, "td" | "th") {
                    self.pop();
                }
                self.top().tag == "tr"
            }
            _ => top == "p" && CLOSES_P.contains(&name),
        };
        if close {
            self.pop();
        }
    }

    fn finish(mut self) -> Element {
        while self.stack.len() > 1 {
            self.pop();
        }
        let doc = self.stack.pop().expect("document container");
        let significant: Vec<&DomNode> = doc
            .children
            .iter()
            .filter(|n| !matches!(n, DomNode::Comment(_)))
            .collect();
        if let [DomNode::Element(e)] = significant.as_slice() {
            if e.tag == "html" {
                return (*e).clone();
            }
        }
        let mut root = Element::new("html");
        root.children = doc.children;
        root
    }
}
