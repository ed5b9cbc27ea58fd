use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    ActiveElement, HtmlParser, MeasureError, MeasurementReport, MutationAction, MutationEvent, MutationPhase,
    ParseFailure, RawElement, ResourceFetcher,
};
use crate::manifest::{ElementKind, LoadMode, SandboxPolicy, SrcType};
use crate::sri::ContentDigests;
use crate::url::strip_query;

/// Nesting limit for iframe documents measured through the fetcher.
pub const DEFAULT_MAX_DEPTH: usize = 8;

const EVENT_HANDLERS: &str = include_str!("../../data/event_handlers.txt");

pub fn is_event_handler_attribute(name: &str) -> bool {
    EVENT_HANDLERS
        .lines()
        .filter(|l| !l.starts_with('#'))
        .any(|l| l.trim().eq_ignore_ascii_case(name))
}

fn javascript_code(src: &str) -> Option<&str> {
    let t = src.trim_start();
    let scheme = t.get(..11)?;
    scheme.eq_ignore_ascii_case("javascript:").then(|| &t[11..])
}

/// Runs extraction and mutation replay against a parser and an optional
/// fetcher.
pub struct Measurer<'a> {
    pub parser: &'a dyn HtmlParser,
    pub fetcher: Option<&'a dyn ResourceFetcher>,
    pub max_depth: usize,
}

impl<'a> Measurer<'a> {
    pub fn new(parser: &'a dyn HtmlParser, fetcher: Option<&'a dyn ResourceFetcher>) -> Self {
        Self { parser, fetcher, max_depth: DEFAULT_MAX_DEPTH }
    }

    /// Active elements of a document at load time, in document order.
    pub fn extract_static(&self, html: &[u8], base_url: &str) -> Result<Vec<ActiveElement>, ParseFailure> {
        self.extract_at(html, base_url, 0)
    }

    fn extract_at(&self, html: &[u8], base_url: &str, depth: usize) -> Result<Vec<ActiveElement>, ParseFailure> {
        let raw = self.parser.parse(html, base_url)?;
        let mut out = Vec::new();
        for el in &raw {
            let start = out.len();
            classify(el, &mut out);
            for (i, a) in out[start..].iter_mut().enumerate() {
                a.order_index = start + i;
                self.enrich(a, el, base_url, depth);
            }
        }
        Ok(out)
    }

    /// Measurement of a page plus a mutation stream.
    pub fn measure(&self, html: &[u8], url: &str, events: &[MutationEvent]) -> Result<MeasurementReport, MeasureError> {
        let base = self.extract_static(html, url)?;
        self.replay_mutations(url, base, events)
    }

    /// Applies `events` in order: additions before the load boundary extend
    /// the static list, later ones are dynamic; removals mark the matching
    /// element non-persistent but keep it.
    pub fn replay_mutations(
        &self,
        url: &str,
        base: Vec<ActiveElement>,
        events: &[MutationEvent],
    ) -> Result<MeasurementReport, MeasureError> {
        let mut statics = base;
        let mut dynamics: Vec<ActiveElement> = Vec::new();
        let mut next_index = statics.iter().map(|e| e.order_index + 1).max().unwrap_or(0);
        for (index, ev) in events.iter().enumerate() {
            let mut found = Vec::new();
            classify(&ev.element, &mut found);
            for a in &mut found {
                self.enrich(a, &ev.element, url, 0);
            }
            match ev.action {
                MutationAction::Add => {
                    for mut a in found {
                        a.order_index = next_index;
                        next_index += 1;
                        match ev.phase {
                            MutationPhase::BeforeLoad => statics.push(a),
                            MutationPhase::AfterLoad => {
                                a.dynamic = true;
                                dynamics.push(a);
                            }
                        }
                    }
                }
                MutationAction::Remove => {
                    for a in &found {
                        let target = statics
                            .iter_mut()
                            .chain(dynamics.iter_mut())
                            .find(|e| e.persistent && e.same_identity(a))
                            .ok_or(MeasureError::UnknownTarget { index })?;
                        target.persistent = false;
                    }
                }
            }
        }
        let load_boundary_index = statics.len();
        statics.extend(dynamics);
        Ok(MeasurementReport { url: strip_query(url).to_string(), elements: statics, load_boundary_index })
    }

    fn enrich(&self, a: &mut ActiveElement, raw: &RawElement, base_url: &str, depth: usize) {
        match a.kind {
            ElementKind::External => {
                let fetched = a.src.as_deref().zip(self.fetcher).and_then(|(src, f)| f.fetch(src));
                if let Some(resp) = fetched {
                    a.digests = Some(ContentDigests::of(&resp.body));
                } else if let Some(integrity) = &a.integrity {
                    a.digests = Some(ContentDigests::single(integrity.clone()));
                }
            }
            ElementKind::Iframe(SrcType::ExternalUrl) if depth < self.max_depth => {
                let fetched = a.src.as_deref().zip(self.fetcher).and_then(|(src, f)| f.fetch(src));
                if let (Some(resp), Some(src)) = (fetched, a.src.as_deref()) {
                    a.digests = Some(ContentDigests::of(&resp.body));
                    a.children = self.extract_at(&resp.body, src, depth + 1).ok();
                }
            }
            ElementKind::Iframe(SrcType::Srcdoc) if depth < self.max_depth => {
                let doc = raw.get("srcdoc").unwrap_or("");
                a.children = self.extract_at(doc.as_bytes(), base_url, depth + 1).ok();
            }
            _ => {}
        }
    }
}

fn load_mode(el: &RawElement) -> LoadMode {
    if el.get("async").is_some() {
        LoadMode::Async
    } else if el.get("defer").is_some() {
        LoadMode::Defer
    } else {
        LoadMode::Sync
    }
}

/// Appends the active elements carried by `el`: the element itself (script or
/// iframe) first, then one entry per event-handler attribute.
pub(super) fn classify(el: &RawElement, out: &mut Vec<ActiveElement>) {
    let tag = el.tag.to_ascii_lowercase();
    match tag.as_str() {
        "script" => match el.get("src") {
            Some(src) => {
                let mut a = ActiveElement::new(ElementKind::External, 0);
                a.src = Some(src.to_string());
                a.integrity = el.get("integrity").and_then(|v| v.split_ascii_whitespace().next()?.parse().ok());
                a.crossorigin = el.get("crossorigin").map(String::from);
                a.load = load_mode(el);
                out.push(a);
            }
            None => {
                let mut a = ActiveElement::new(ElementKind::Inline, 0);
                a.digests = Some(ContentDigests::of(el.text.as_bytes()));
                // async and defer have no effect on inline scripts.
                out.push(a);
            }
        },
        "iframe" => {
            let src = el.get("src");
            // Without src or srcdoc the frame holds an empty document, which
            // is measured like an empty srcdoc.
            let srcdoc = el.get("srcdoc").or(if src.is_none() { Some("") } else { None });
            let mut a = if let Some(doc) = srcdoc {
                let mut a = ActiveElement::new(ElementKind::Iframe(SrcType::Srcdoc), 0);
                a.digests = Some(ContentDigests::of(doc.as_bytes()));
                a
            } else if let Some(code) = src.and_then(javascript_code) {
                let mut a = ActiveElement::new(ElementKind::Iframe(SrcType::Script), 0);
                a.digests = Some(ContentDigests::of(code.as_bytes()));
                a
            } else {
                let mut a = ActiveElement::new(ElementKind::Iframe(SrcType::ExternalUrl), 0);
                a.src = src.map(String::from);
                a
            };
            if let Some(s) = el.get("sandbox") {
                a.sandbox = SandboxPolicy::from_attr(s);
            }
            a.crossorigin = el.get("crossorigin").map(String::from);
            out.push(a);
        }
        _ => {}
    }
    for (name, value) in &el.attrs {
        if is_event_handler_attribute(name) {
            let mut a = ActiveElement::new(ElementKind::EventHandler, 0);
            a.handler = Some(name.to_ascii_lowercase());
            a.digests = Some(ContentDigests::of(value.as_bytes()));
            out.push(a);
        }
    }
}
