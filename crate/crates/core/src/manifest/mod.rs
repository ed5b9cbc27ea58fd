//! Manifest data model.
//!
//! A manifest enumerates the active content a page is allowed to run, in
//! order, together with the trust relationship for each element and the
//! sandbox restrictions for iframes.

mod completeness;
mod parse;
mod serialize;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use completeness::{validate_completeness, Finding};
pub use parse::{parse_manifest, parse_manifest_with, ManifestError, ParseOptions, ParsedManifest, SchemaError, SchemaReason};
pub use serialize::{serialize_manifest, serialize_manifest_pretty};

use crate::sri::SriHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrustLevel {
    Assert,
    Delegate,
    BlindTrust,
}

impl TrustLevel {
    pub const ALL: [TrustLevel; 3] = [TrustLevel::Assert, TrustLevel::Delegate, TrustLevel::BlindTrust];

    pub fn as_str(self) -> &'static str {
        match self {
            TrustLevel::Assert => "assert",
            TrustLevel::Delegate => "delegate",
            TrustLevel::BlindTrust => "blind-trust",
        }
    }
}

impl FromStr for TrustLevel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "assert" => Ok(TrustLevel::Assert),
            "delegate" => Ok(TrustLevel::Delegate),
            "blind-trust" => Ok(TrustLevel::BlindTrust),
            _ => Err(()),
        }
    }
}

impl fmt::Display for TrustLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How an iframe obtains its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum SrcType {
    /// `src` is a URL.
    #[default]
    ExternalUrl,
    /// Document inlined in the `srcdoc` attribute.
    Srcdoc,
    /// Document produced by `javascript:` code in `src`.
    Script,
}

impl SrcType {
    pub fn as_str(self) -> &'static str {
        match self {
            SrcType::ExternalUrl => "external",
            SrcType::Srcdoc => "srcdoc",
            SrcType::Script => "script",
        }
    }
}

impl FromStr for SrcType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            // "link" appears in published manifests as a synonym.
            "external" | "link" => Ok(SrcType::ExternalUrl),
            "srcdoc" => Ok(SrcType::Srcdoc),
            "script" => Ok(SrcType::Script),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKind {
    Inline,
    EventHandler,
    External,
    Iframe(SrcType),
}

impl ElementKind {
    pub const ALL: [ElementKind; 6] = [
        ElementKind::Inline,
        ElementKind::EventHandler,
        ElementKind::External,
        ElementKind::Iframe(SrcType::ExternalUrl),
        ElementKind::Iframe(SrcType::Srcdoc),
        ElementKind::Iframe(SrcType::Script),
    ];

    pub fn type_name(self) -> &'static str {
        match self {
            ElementKind::Inline => "inline",
            ElementKind::EventHandler => "event_handler",
            ElementKind::External => "external",
            ElementKind::Iframe(_) => "iframe",
        }
    }

    pub fn is_iframe(self) -> bool {
        matches!(self, ElementKind::Iframe(_))
    }

    /// Script kinds carry a meaningful load mode.
    pub fn is_script(self) -> bool {
        !self.is_iframe()
    }

    /// Whether `trust` may be declared for this kind of element.
    pub fn allows_trust(self, trust: TrustLevel) -> bool {
        match self {
            ElementKind::Inline | ElementKind::EventHandler => trust == TrustLevel::Assert,
            ElementKind::External | ElementKind::Iframe(SrcType::ExternalUrl) => true,
            ElementKind::Iframe(SrcType::Srcdoc | SrcType::Script) => trust == TrustLevel::Assert,
        }
    }

    /// Whether the element's `src` must be a URL.
    pub fn requires_url_src(self) -> bool {
        matches!(self, ElementKind::External | ElementKind::Iframe(SrcType::ExternalUrl))
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementKind::Iframe(st) => write!(f, "iframe({})", st.as_str()),
            other => f.write_str(other.type_name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum LoadMode {
    #[default]
    Sync,
    Async,
    Defer,
}

impl LoadMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoadMode::Sync => "sync",
            LoadMode::Async => "async",
            LoadMode::Defer => "defer",
        }
    }
}

impl FromStr for LoadMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "sync" => Ok(LoadMode::Sync),
            "async" => Ok(LoadMode::Async),
            "defer" => Ok(LoadMode::Defer),
            _ => Err(()),
        }
    }
}

/// Iframe `sandbox` attribute. `present == false` means no attribute at all,
/// which is the least restrictive setting; an empty allowlist is the most
/// restrictive one.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct SandboxPolicy {
    pub present: bool,
    pub allowlist: BTreeSet<String>,
}

impl SandboxPolicy {
    pub fn absent() -> Self {
        Self::default()
    }

    /// Parses an attribute value: whitespace separated, case-insensitive tokens.
    pub fn from_attr(value: &str) -> Self {
        Self {
            present: true,
            allowlist: value.split_ascii_whitespace().map(|t| t.to_ascii_lowercase()).collect(),
        }
    }

    pub fn with_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { present: true, allowlist: tokens.into_iter().map(|t| t.as_ref().to_ascii_lowercase()).collect() }
    }

    /// `self` is equally strict or stricter than `declared`.
    pub fn at_least_as_strict_as(&self, declared: &SandboxPolicy) -> bool {
        if !declared.present {
            return true;
        }
        self.present && self.allowlist.is_subset(&declared.allowlist)
    }

    pub fn to_attr(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.allowlist.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestBlock {
    pub seq: Option<u64>,
    pub kind: ElementKind,
    pub trust: TrustLevel,
    pub src: Option<String>,
    pub hash: Option<SriHash>,
    pub sandbox: SandboxPolicy,
    pub crossorigin: Option<String>,
    pub dynamic: bool,
    pub persistent: bool,
    pub load: LoadMode,
    /// Blocks for the active content inside an iframe's document.
    pub nested_manifest: Option<Vec<ManifestBlock>>,
    pub name: Option<String>,
    pub version: Option<String>,
    pub description: Option<String>,
}

impl ManifestBlock {
    /// A static block with defaults for every optional directive.
    pub fn new(kind: ElementKind, trust: TrustLevel) -> Self {
        Self {
            seq: None,
            kind,
            trust,
            src: None,
            hash: None,
            sandbox: SandboxPolicy::absent(),
            crossorigin: None,
            dynamic: false,
            persistent: true,
            load: LoadMode::Sync,
            nested_manifest: None,
            name: None,
            version: None,
            description: None,
        }
    }

    pub fn is_static(&self) -> bool {
        !self.dynamic
    }

    /// Human-readable reference used in findings and violations.
    pub fn label(&self) -> String {
        match self.seq {
            Some(seq) if !self.dynamic => alloc::format!("seq {seq}"),
            _ => alloc::format!("dynamic {}", self.src.as_deref().unwrap_or(self.kind.type_name())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub url: String,
    pub manifest_version: String,
    pub name: Option<String>,
    pub description: Option<String>,
    pub contents: Vec<ManifestBlock>,
}

impl Manifest {
    pub fn new(url: &str, manifest_version: &str) -> Self {
        Self {
            url: crate::url::strip_query(url).to_string(),
            manifest_version: manifest_version.to_string(),
            name: None,
            description: None,
            contents: Vec::new(),
        }
    }

    pub fn static_blocks(&self) -> impl Iterator<Item = &ManifestBlock> {
        self.contents.iter().filter(|b| b.is_static())
    }

    /// SHA-256 over the canonical serialization; identifies the manifest in
    /// log entries and protocol traces.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        Sha256::digest(serialize_manifest(self)).into()
    }
}
