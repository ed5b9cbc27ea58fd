use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{ElementKind, LoadMode, Manifest, ManifestBlock, SandboxPolicy, SrcType, TrustLevel};
use crate::url::{is_absolute_url, strip_query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    /// Report unknown fields as warnings instead of rejecting the document.
    pub lenient: bool,
    /// Accept gaps between the sequence numbers of static blocks.
    pub allow_seq_gaps: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaReason {
    Missing,
    WrongType(&'static str),
    InvalidValue(String),
    UnknownField,
    IllegalTrustCombination { kind: ElementKind, trust: TrustLevel },
    /// Assert without a hash (or, for iframes, a nested manifest).
    MissingAssertion,
    SandboxNotAllowed,
    NotAnIframe,
    SeqRequired,
    SeqOrder(String),
    QueryStripped,
}

impl fmt::Display for SchemaReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaReason::Missing => f.write_str("required field is missing"),
            SchemaReason::WrongType(t) => write!(f, "expected {t}"),
            SchemaReason::InvalidValue(v) => write!(f, "invalid value: {v}"),
            SchemaReason::UnknownField => f.write_str("unknown field"),
            SchemaReason::IllegalTrustCombination { kind, trust } => {
                write!(f, "trust `{trust}` is not allowed for {kind}")
            }
            SchemaReason::MissingAssertion => f.write_str("trust `assert` requires `hash` (or a nested `manifest` for iframes)"),
            SchemaReason::SandboxNotAllowed => f.write_str("`sandbox` only applies to iframes"),
            SchemaReason::NotAnIframe => f.write_str("only iframes may carry this field"),
            SchemaReason::SeqRequired => f.write_str("static content requires `seq`"),
            SchemaReason::SeqOrder(why) => f.write_str(why),
            SchemaReason::QueryStripped => f.write_str("query component removed from url"),
        }
    }
}

/// One violated schema rule, located by a JSON path such as `contents[2].trust`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct SchemaError {
    pub field: String,
    pub reason: SchemaReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("manifest violates the schema ({} problem(s)); first: {}", .0.len(), .0[0])]
    Schema(Vec<SchemaError>),
}

impl ManifestError {
    pub fn schema_errors(&self) -> &[SchemaError] {
        match self {
            ManifestError::Schema(errs) => errs,
            ManifestError::Syntax(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedManifest {
    pub manifest: Manifest,
    pub warnings: Vec<SchemaError>,
}

/// Strict parse with default options.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    parse_manifest_with(text, &ParseOptions::default()).map(|p| p.manifest)
}

pub fn parse_manifest_with(text: &str, opts: &ParseOptions) -> Result<ParsedManifest, ManifestError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ManifestError::Syntax(e.to_string()))?;
    let mut cx = Cx { opts: *opts, errors: Vec::new(), warnings: Vec::new() };
    let manifest = cx.manifest(&value);
    match manifest {
        Some(m) if cx.errors.is_empty() => Ok(ParsedManifest { manifest: m, warnings: cx.warnings }),
        _ => Err(ManifestError::Schema(cx.errors)),
    }
}

const TOP_FIELDS: &[&str] = &["url", "manifest_version", "name", "description", "contents"];
const BLOCK_FIELDS: &[&str] = &[
    "seq",
    "name",
    "version",
    "description",
    "type",
    "trust",
    "src_type",
    "src",
    "hash",
    "sandbox",
    "crossorigin",
    "dynamic",
    "persistent",
    "load",
    "manifest",
];

struct Cx {
    opts: ParseOptions,
    errors: Vec<SchemaError>,
    warnings: Vec<SchemaError>,
}

impl Cx {
    fn err(&mut self, field: impl Into<String>, reason: SchemaReason) {
        self.errors.push(SchemaError { field: field.into(), reason });
    }

    fn unknown_fields(&mut self, obj: &Map<String, Value>, known: &[&str], path: &str) {
        for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
            let e = SchemaError { field: join(path, key), reason: SchemaReason::UnknownField };
            if self.opts.lenient {
                self.warnings.push(e);
            } else {
                self.errors.push(e);
            }
        }
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.err(join(path, key), SchemaReason::WrongType("string"));
                None
            }
        }
    }

    fn bool_or(&mut self, obj: &Map<String, Value>, key: &str, path: &str, default: bool) -> bool {
        match obj.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.err(join(path, key), SchemaReason::WrongType("boolean"));
                default
            }
        }
    }

    fn manifest(&mut self, value: &Value) -> Option<Manifest> {
        let Some(obj) = value.as_object() else {
            self.err("$", SchemaReason::WrongType("object"));
            return None;
        };
        self.unknown_fields(obj, TOP_FIELDS, "");

        let url = match self.string(obj, "url", "") {
            Some(u) if is_absolute_url(&u) => {
                let stripped = strip_query(&u);
                if stripped.len() != u.len() {
                    self.warnings.push(SchemaError { field: "url".into(), reason: SchemaReason::QueryStripped });
                }
                Some(stripped.to_string())
            }
            Some(u) => {
                self.err("url", SchemaReason::InvalidValue(format!("`{u}` is not an absolute URL")));
                None
            }
            None => {
                if !obj.contains_key("url") {
                    self.err("url", SchemaReason::Missing);
                }
                None
            }
        };
        let version = match self.string(obj, "manifest_version", "") {
            Some(v) if !v.is_empty() => Some(v),
            Some(_) => {
                self.err("manifest_version", SchemaReason::InvalidValue("empty version".into()));
                None
            }
            None => {
                if !obj.contains_key("manifest_version") {
                    self.err("manifest_version", SchemaReason::Missing);
                }
                None
            }
        };
        let name = self.string(obj, "name", "");
        let description = self.string(obj, "description", "");
        let contents = match obj.get("contents") {
            None => {
                self.err("contents", SchemaReason::Missing);
                None
            }
            Some(v) => self.blocks(v, "contents"),
        };
        Some(Manifest { url: url?, manifest_version: version?, name, description, contents: contents? })
    }

    fn blocks(&mut self, value: &Value, path: &str) -> Option<Vec<ManifestBlock>> {
        let Some(items) = value.as_array() else {
            self.err(path, SchemaReason::WrongType("array"));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match self.block(item, &format!("{path}[{i}]")) {
                Some(b) => out.push(b),
                None => ok = false,
            }
        }
        self.check_seq(&out, path);
        ok.then_some(out)
    }

    fn check_seq(&mut self, blocks: &[ManifestBlock], path: &str) {
        let mut expected = 0u64;
        let mut prev: Option<u64> = None;
        for (i, b) in blocks.iter().enumerate() {
            let (false, Some(seq)) = (b.dynamic, b.seq) else { continue };
            let field = format!("{path}[{i}].seq");
            if let Some(p) = prev {
                if seq <= p {
                    let why = if seq == p { "repeated sequence number" } else { "sequence numbers must ascend" };
                    self.err(field, SchemaReason::SeqOrder(format!("{why} ({p} then {seq})")));
                    prev = Some(p.max(seq));
                    continue;
                }
            }
            if prev.is_none() && seq != 0 {
                self.err(field, SchemaReason::SeqOrder(format!("static sequence must start at 0, found {seq}")));
            } else if !self.opts.allow_seq_gaps && prev.is_some() && seq != expected {
                self.err(field, SchemaReason::SeqOrder(format!("gap in static sequence: expected {expected}, found {seq}")));
            }
            prev = Some(seq);
            expected = seq + 1;
        }
    }

    fn block(&mut self, value: &Value, path: &str) -> Option<ManifestBlock> {
        let Some(obj) = value.as_object() else {
            self.err(path, SchemaReason::WrongType("object"));
            return None;
        };
        let errors_before = self.errors.len();
        self.unknown_fields(obj, BLOCK_FIELDS, path);

        let type_name = self.string(obj, "type", path);
        if type_name.is_none() && !obj.contains_key("type") {
            self.err(join(path, "type"), SchemaReason::Missing);
        }
        let src_type = match self.string(obj, "src_type", path) {
            None => SrcType::ExternalUrl,
            Some(s) => s.parse().unwrap_or_else(|_| {
                self.err(join(path, "src_type"), SchemaReason::InvalidValue(s));
                SrcType::ExternalUrl
            }),
        };
        let kind = match type_name.as_deref() {
            Some("inline") => Some(ElementKind::Inline),
            Some("event_handler") => Some(ElementKind::EventHandler),
            Some("external") => Some(ElementKind::External),
            Some("iframe") => Some(ElementKind::Iframe(src_type)),
            Some(other) => {
                self.err(join(path, "type"), SchemaReason::InvalidValue(other.to_string()));
                None
            }
            None => None,
        };
        let is_iframe = kind.is_some_and(ElementKind::is_iframe);
        if obj.contains_key("src_type") && kind.is_some() && !is_iframe {
            self.err(join(path, "src_type"), SchemaReason::NotAnIframe);
        }

        let trust = match self.string(obj, "trust", path) {
            Some(t) => t.parse::<TrustLevel>().ok().or_else(|| {
                self.err(join(path, "trust"), SchemaReason::InvalidValue(t));
                None
            }),
            // Inline scripts and event handlers can only be asserted, so the
            // directive may be left out for them.
            None if matches!(kind, Some(ElementKind::Inline | ElementKind::EventHandler)) => Some(TrustLevel::Assert),
            None => {
                if kind.is_some() && !obj.contains_key("trust") {
                    self.err(join(path, "trust"), SchemaReason::Missing);
                }
                None
            }
        };
        if let (Some(k), Some(t)) = (kind, trust) {
            if !k.allows_trust(t) {
                self.err(join(path, "trust"), SchemaReason::IllegalTrustCombination { kind: k, trust: t });
            }
        }

        let hash = self.string(obj, "hash", path).and_then(|h| match h.parse() {
            Ok(h) => Some(h),
            Err(e) => {
                self.err(join(path, "hash"), SchemaReason::InvalidValue(format!("{e}")));
                None
            }
        });
        let src = self.string(obj, "src", path);
        let needs_url = kind.is_some_and(ElementKind::requires_url_src) || trust == Some(TrustLevel::BlindTrust);
        match (&src, needs_url) {
            (None, true) if !obj.contains_key("src") => self.err(join(path, "src"), SchemaReason::Missing),
            (Some(s), true) if !is_absolute_url(s) => {
                self.err(join(path, "src"), SchemaReason::InvalidValue(format!("`{s}` is not an absolute URL")))
            }
            _ => {}
        }

        let sandbox = match self.string(obj, "sandbox", path) {
            Some(s) => {
                if kind.is_some() && !is_iframe {
                    self.err(join(path, "sandbox"), SchemaReason::SandboxNotAllowed);
                }
                SandboxPolicy::from_attr(&s)
            }
            None => SandboxPolicy::absent(),
        };
        let crossorigin = self.string(obj, "crossorigin", path);
        let dynamic = self.bool_or(obj, "dynamic", path, false);
        let persistent = self.bool_or(obj, "persistent", path, true);
        let load = match self.string(obj, "load", path) {
            None => LoadMode::Sync,
            Some(l) => l.parse().unwrap_or_else(|_| {
                self.err(join(path, "load"), SchemaReason::InvalidValue(l));
                LoadMode::Sync
            }),
        };
        let seq = match obj.get("seq") {
            None => None,
            Some(v) => match v.as_u64() {
                Some(n) => Some(n),
                None => {
                    self.err(join(path, "seq"), SchemaReason::WrongType("non-negative integer"));
                    None
                }
            },
        };
        if !dynamic && seq.is_none() && !obj.contains_key("seq") {
            self.err(join(path, "seq"), SchemaReason::SeqRequired);
        }
        let nested_manifest = match obj.get("manifest") {
            None => None,
            Some(v) => {
                if kind.is_some() && !is_iframe {
                    self.err(join(path, "manifest"), SchemaReason::NotAnIframe);
                }
                self.blocks(v, &join(path, "manifest"))
            }
        };
        if trust == Some(TrustLevel::Assert) && hash.is_none() && !obj.contains_key("hash") {
            let nested_ok = is_iframe && obj.contains_key("manifest");
            if !nested_ok {
                self.err(join(path, "hash"), SchemaReason::MissingAssertion);
            }
        }

        let name = self.string(obj, "name", path);
        let version = self.string(obj, "version", path);
        let description = self.string(obj, "description", path);

        if self.errors.len() != errors_before {
            return None;
        }
        let kind = kind?;
        Some(ManifestBlock {
            seq,
            kind,
            trust: trust?,
            src,
            hash,
            sandbox,
            crossorigin,
            dynamic,
            persistent,
            // Load mode has no meaning for iframes.
            load: if kind.is_script() { load } else { LoadMode::Sync },
            nested_manifest,
            name,
            version,
            description,
        })
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const HELLO: &str = r#"{ "url": "http://www.helloworld.com/",
  "manifest_version": "v0",
  "contents": [
    { "seq": 0,
      "type": "inline",
      "load": "sync",
      "trust": "assert",
      "hash": "sha256-AfuyZ600rkX8AD+xANHUProHJm+22Tp0bMnvPFk/vas="}]}"#;

    fn reasons(text: &str) -> Vec<SchemaReason> {
        parse_manifest(text).unwrap_err().schema_errors().iter().map(|e| e.reason.clone()).collect()
    }

    #[test]
    fn hello_world_manifest() {
        let m = parse_manifest(HELLO).unwrap();
        assert_eq!(m.url, "http://www.helloworld.com/");
        assert_eq!(m.manifest_version, "v0");
        assert_eq!(m.contents.len(), 1);
        let b = &m.contents[0];
        assert_eq!((b.seq, b.kind, b.trust, b.load), (Some(0), ElementKind::Inline, TrustLevel::Assert, LoadMode::Sync));
        assert!(b.persistent && !b.dynamic);
    }

    #[test]
    fn inline_delegate_is_illegal() {
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[{"seq":0,"type":"inline","trust":"delegate"}]}"#;
        assert!(reasons(text).contains(&SchemaReason::IllegalTrustCombination {
            kind: ElementKind::Inline,
            trust: TrustLevel::Delegate
        }));
    }

    #[test]
    fn syntax_error() {
        assert!(matches!(parse_manifest("{\"url\": "), Err(ManifestError::Syntax(_))));
    }

    #[test]
    fn unknown_fields_strict_and_lenient() {
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[],"owner":"x"}"#;
        assert_eq!(reasons(text), vec![SchemaReason::UnknownField]);
        let parsed = parse_manifest_with(text, &ParseOptions { lenient: true, ..Default::default() }).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.warnings[0].field, "owner");
    }

    #[test]
    fn seq_rules() {
        let block = |seq: u64| alloc::format!(r#"{{"seq":{seq},"type":"inline","hash":"sha256-47DEQpj8HBSa+/TImW+5JCeuQeRkm5NMpJWZG3hSuFU="}}"#);
        let doc = |seqs: &[u64]| {
            let items: Vec<String> = seqs.iter().map(|s| block(*s)).collect();
            alloc::format!(r#"{{"url":"https://a.com/","manifest_version":"v1","contents":[{}]}}"#, items.join(","))
        };
        assert!(parse_manifest(&doc(&[0, 1, 2])).is_ok());
        assert!(matches!(reasons(&doc(&[1, 2]))[..], [SchemaReason::SeqOrder(_)]));
        assert!(matches!(reasons(&doc(&[0, 0]))[..], [SchemaReason::SeqOrder(_)]));
        assert!(matches!(reasons(&doc(&[0, 2, 1]))[..], [SchemaReason::SeqOrder(_), ..]));
        assert!(matches!(reasons(&doc(&[0, 2]))[..], [SchemaReason::SeqOrder(_)]));
        let gaps = ParseOptions { allow_seq_gaps: true, ..Default::default() };
        assert!(parse_manifest_with(&doc(&[0, 2, 5]), &gaps).is_ok());
    }

    #[test]
    fn dynamic_blocks_need_no_seq() {
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[
            {"type":"external","trust":"blind-trust","src":"https://cdn.example/x.js","dynamic":true}]}"#;
        assert!(parse_manifest(text).is_ok());
        let text = text.replace(",\"dynamic\":true", "");
        assert_eq!(reasons(&text), vec![SchemaReason::SeqRequired]);
    }

    #[test]
    fn sandbox_only_on_iframes_and_empty_string_is_present() {
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[
            {"seq":0,"type":"external","trust":"delegate","src":"https://b.com/x.js","sandbox":"allow-scripts"}]}"#;
        assert_eq!(reasons(text), vec![SchemaReason::SandboxNotAllowed]);
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[
            {"seq":0,"type":"iframe","src_type":"link","trust":"delegate","src":"https://b.com/","sandbox":""}]}"#;
        let m = parse_manifest(text).unwrap();
        assert!(m.contents[0].sandbox.present && m.contents[0].sandbox.allowlist.is_empty());
        assert_eq!(m.contents[0].kind, ElementKind::Iframe(SrcType::ExternalUrl));
    }

    #[test]
    fn assert_requires_hash_unless_nested() {
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[{"seq":0,"type":"external","trust":"assert","src":"https://b.com/x.js"}]}"#;
        assert_eq!(reasons(text), vec![SchemaReason::MissingAssertion]);
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[{"seq":0,"type":"iframe","trust":"assert","src":"https://b.com/","manifest":[]}]}"#;
        assert!(parse_manifest(text).is_ok());
    }

    #[test]
    fn blind_trust_requires_url_src() {
        let text = r#"{"url":"https://a.com/","manifest_version":"v1","contents":[{"seq":0,"type":"external","trust":"blind-trust","src":"x.js"}]}"#;
        assert!(matches!(reasons(text)[..], [SchemaReason::InvalidValue(_)]));
    }

    #[test]
    fn url_query_is_dropped() {
        let text = r#"{"url":"https://a.com/page?id=7","manifest_version":"v1","contents":[]}"#;
        let parsed = parse_manifest_with(text, &ParseOptions::default()).unwrap();
        assert_eq!(parsed.manifest.url, "https://a.com/page");
        assert_eq!(parsed.warnings[0].reason, SchemaReason::QueryStripped);
    }

    #[test]
    fn missing_header_fields() {
        let rs = reasons(r#"{"contents":[]}"#);
        assert!(rs.iter().filter(|r| **r == SchemaReason::Missing).count() == 2);
    }
}
