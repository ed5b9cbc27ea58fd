//! Active-content measurement.
//!
//! A document is reduced to the ordered list of active elements it would run:
//! scripts, event-handler attributes and iframes. Mutations observed while the
//! page is alive are replayed on top of that list. HTML tree construction is
//! delegated to an [`HtmlParser`] implementation and network access to a
//! [`ResourceFetcher`], so this module stays pure.

mod extract;
mod mutation;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::manifest::{ElementKind, LoadMode, SandboxPolicy};
use crate::sri::{ContentDigests, SriHash};

pub use extract::{is_event_handler_attribute, Measurer, DEFAULT_MAX_DEPTH};
pub use mutation::{parse_mutation_script, MutationAction, MutationPhase, MutationSyntaxError};

/// An element as produced by HTML tree construction, before classification.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawElement {
    /// Lowercased tag name.
    pub tag: String,
    /// Attributes in source order, names lowercased.
    pub attrs: Vec<(String, String)>,
    /// Concatenated text content (only meaningful for `script`).
    pub text: String,
}

impl RawElement {
    pub fn new(tag: &str) -> Self {
        Self { tag: tag.into(), ..Self::default() }
    }

    pub fn attr(mut self, name: &str, value: &str) -> Self {
        self.attrs.push((name.into(), value.into()));
        self
    }

    pub fn text(mut self, text: &str) -> Self {
        self.text = text.into();
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse document: {0}")]
pub struct ParseFailure(pub String);

/// HTML tree construction. Implementations return every element of the
/// document in document order; `src` attributes of scripts and iframes should
/// be resolved against `base_url`.
pub trait HtmlParser {
    fn parse(&self, html: &[u8], base_url: &str) -> Result<Vec<RawElement>, ParseFailure>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Response {
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Source of external scripts, iframe documents and signed manifests.
/// `None` means not found, or a body the measuring party may not read.
pub trait ResourceFetcher {
    fn fetch(&self, url: &str) -> Option<Response>;
}

/// Fetcher that never returns anything.
pub struct NoFetch;

impl ResourceFetcher for NoFetch {
    fn fetch(&self, _url: &str) -> Option<Response> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActiveElement {
    #[serde(serialize_with = "ser_display")]
    pub kind: ElementKind,
    pub order_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src: Option<String>,
    /// Attribute name for event handlers (`onclick`, ...).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub handler: Option<String>,
    /// Digests of the element's content; `None` when the content could not be
    /// obtained (an external script that was neither fetched nor pinned).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digests: Option<ContentDigests>,
    /// The `integrity` attribute of an external script.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrity: Option<SriHash>,
    #[serde(serialize_with = "ser_sandbox")]
    pub sandbox: SandboxPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossorigin: Option<String>,
    #[serde(serialize_with = "ser_load")]
    pub load: LoadMode,
    pub dynamic: bool,
    pub persistent: bool,
    /// Active content of an iframe's document, when it could be read.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<ActiveElement>>,
}

impl ActiveElement {
    pub fn new(kind: ElementKind, order_index: usize) -> Self {
        Self {
            kind,
            order_index,
            src: None,
            handler: None,
            digests: None,
            integrity: None,
            sandbox: SandboxPolicy::absent(),
            crossorigin: None,
            load: LoadMode::Sync,
            dynamic: false,
            persistent: true,
            children: None,
        }
    }

    /// The preferred content hash (sha256 when known).
    pub fn content_hash(&self) -> Option<&SriHash> {
        self.digests.as_ref().and_then(ContentDigests::primary)
    }

    /// Whether two measurements denote the same element.
    pub fn same_identity(&self, other: &ActiveElement) -> bool {
        self.kind == other.kind
            && self.src == other.src
            && self.handler == other.handler
            && self.content_hash() == other.content_hash()
    }
}

fn ser_display<S: Serializer, T: core::fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn ser_load<S: Serializer>(v: &LoadMode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(v.as_str())
}

fn ser_sandbox<S: Serializer>(v: &SandboxPolicy, s: S) -> Result<S::Ok, S::Error> {
    if v.present {
        s.serialize_some(&v.to_attr())
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasurementReport {
    /// Page URL with the query removed.
    pub url: String,
    /// Static elements in document order, followed by dynamic ones in the
    /// order they appeared.
    pub elements: Vec<ActiveElement>,
    /// Index in `elements` of the first dynamic element.
    pub load_boundary_index: usize,
}

impl MeasurementReport {
    pub fn statics(&self) -> impl Iterator<Item = &ActiveElement> {
        self.elements.iter().filter(|e| !e.dynamic)
    }

    pub fn dynamics(&self) -> impl Iterator<Item = &ActiveElement> {
        self.elements.iter().filter(|e| e.dynamic)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationEvent {
    pub action: MutationAction,
    pub phase: MutationPhase,
    pub element: RawElement,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Parse(#[from] ParseFailure),
    #[error("mutation {index}: removed element was never part of the page")]
    UnknownTarget { index: usize },
}
