//! HTML tree construction with html5ever.


use accjs_core::measure::{HtmlParser, ParseFailure, RawElement};
use html5ever::tendril::TendrilSink;
use html5ever::{parse_document, ParseOpts};
use markup5ever_rcdom::{Handle, NodeData, RcDom};
use url::Url;

/// Parses documents the way a browser would build the tree, then lists every
/// element in document order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Html5everParser;

impl HtmlParser for Html5everParser {
    fn parse(&self, html: &[u8], base_url: &str) -> Result<Vec<RawElement>, ParseFailure> {
        let text = std::str::from_utf8(html).map_err(|e| ParseFailure(format!("not UTF-8: {e}")))?;
        let mut opts = ParseOpts::default();
        opts.tree_builder.exact_errors = true;
        let dom = parse_document(RcDom::default(), opts).one(text);
        if dom.errors.borrow().iter().any(|e| unterminated_raw_text(e)) {
            let line = text.lines().count().max(1);
            return Err(ParseFailure(format!("line {line}: input ends inside a script element")));
        }
        let base = Url::parse(base_url).ok();
        let mut out = Vec::new();
        walk(&dom.document, base.as_ref(), &mut out);
        Ok(out)
    }
}

/// An end of file inside a script body means the page was cut off.
fn unterminated_raw_text(err: &str) -> bool {
    err.contains("Eof") && err.contains("Text")
}

fn walk(node: &Handle, base: Option<&Url>, out: &mut Vec<RawElement>) {
    if let NodeData::Element { name, attrs, .. } = &node.data {
        let tag = name.local.as_ref().to_ascii_lowercase();
        let mut el = RawElement::new(&tag);
        for a in attrs.borrow().iter() {
            let key = a.name.local.as_ref().to_ascii_lowercase();
            let value = if key == "src" && (tag == "script" || tag == "iframe") {
                resolve(base, &a.value)
            } else {
                a.value.to_string()
            };
            el.attrs.push((key, value));
        }
        if tag == "script" {
            el.text = text_of(node);
        }
        out.push(el);
    }
    for child in node.children.borrow().iter() {
        walk(child, base, out);
    }
}

fn text_of(node: &Handle) -> String {
    let mut s = String::new();
    for child in node.children.borrow().iter() {
        if let NodeData::Text { contents } = &child.data {
            s.push_str(&contents.borrow());
        }
    }
    s
}

fn resolve(base: Option<&Url>, src: &str) -> String {
    let trimmed = src.trim();
    if trimmed.len() >= 11 && trimmed[..11].eq_ignore_ascii_case("javascript:") {
        return src.to_string();
    }
    match base.map(|b| b.join(trimmed)) {
        Some(Ok(u)) => u.to_string(),
        _ => src.to_string(),
    }
}
