//! Compliance of a measured page against its manifest, and manifest
//! generation from a measurement.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{verify_envelope, Registry, SignedEnvelope};
use crate::manifest::{ElementKind, Manifest, ManifestBlock, SrcType, TrustLevel};
use crate::measure::{ActiveElement, HtmlParser, MeasurementReport, Measurer, ResourceFetcher};
use crate::time::Timestamp;
use crate::url::{strip_query, CnMatch};

pub const DEFAULT_MAX_DELEGATION_DEPTH: usize = 8;
/// Header carrying a base64 envelope inline.
pub const HEADER_MANIFEST: &str = "x-acc-js-man";
/// Header pointing at an envelope URL.
pub const HEADER_LINK: &str = "x-acc-js-link";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationCode {
    UnexpectedElement,
    MissingElement,
    KindMismatch,
    HashMismatch,
    HashUnverifiable,
    SrcMismatch,
    SandboxTooPermissive,
    NotPersistent,
    CrossoriginMismatch,
    LoadMismatch,
    DelegationUnresolvable,
    DepthExceeded,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Sequence number of the top-level static block involved, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    /// Path to the block or element, e.g. `seq 2 > seq 0`.
    pub location: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainLink {
    pub url: String,
    pub manifest_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceVerdict {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    /// Manifests consulted, starting with the page's own.
    pub delegation_chain: Vec<ChainLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("manifest is for `{manifest}` but the page is `{page}`")]
    UrlMismatch { manifest: String, page: String },
}

pub struct EvalContext<'a> {
    pub fetcher: &'a dyn ResourceFetcher,
    /// Used to measure delegated iframe documents that the report does not
    /// already contain.
    pub parser: Option<&'a dyn HtmlParser>,
    pub registry: &'a Registry,
    pub now: Timestamp,
    pub max_delegation_depth: usize,
    pub cn_mode: CnMatch,
}

impl<'a> EvalContext<'a> {
    pub fn new(fetcher: &'a dyn ResourceFetcher, registry: &'a Registry, now: Timestamp) -> Self {
        Self {
            fetcher,
            parser: None,
            registry,
            now,
            max_delegation_depth: DEFAULT_MAX_DELEGATION_DEPTH,
            cn_mode: CnMatch::Exact,
        }
    }
}

pub fn evaluate(report: &MeasurementReport, manifest: &Manifest, ctx: &EvalContext<'_>) -> Result<ComplianceVerdict, EvalError> {
    if strip_query(&manifest.url) != report.url {
        return Err(EvalError::UrlMismatch { manifest: manifest.url.clone(), page: report.url.clone() });
    }
    let mut run = Run::new(ctx);
    run.chain.push(ChainLink { url: manifest.url.clone(), manifest_version: manifest.manifest_version.clone() });
    run.check_list(&report.elements, &manifest.contents, &Loc::root(), 0);
    run.violations.sort_by_key(|v| (v.seq.unwrap_or(u64::MAX), v.code));
    Ok(ComplianceVerdict {
        ok: run.violations.is_empty(),
        violations: run.violations,
        warnings: run.warnings,
        delegation_chain: run.chain,
    })
}

#[derive(Clone)]
struct Loc {
    seq: Option<u64>,
    path: String,
}

impl Loc {
    fn root() -> Self {
        Self { seq: None, path: String::new() }
    }

    fn child(&self, label: &str, seq: Option<u64>) -> Self {
        let path = if self.path.is_empty() { label.to_owned() } else { format!("{} > {label}", self.path) };
        Self { seq: self.seq.or(seq), path }
    }
}

struct Run<'c, 'a> {
    ctx: &'c EvalContext<'a>,
    violations: Vec<Violation>,
    warnings: Vec<String>,
    chain: Vec<ChainLink>,
}

impl<'c, 'a> Run<'c, 'a> {
    fn new(ctx: &'c EvalContext<'a>) -> Self {
        Self { ctx, violations: Vec::new(), warnings: Vec::new(), chain: Vec::new() }
    }

    fn flag(&mut self, code: ViolationCode, loc: &Loc, detail: impl Into<String>) {
        self.violations.push(Violation { code, seq: loc.seq, location: loc.path.clone(), detail: detail.into() });
    }

    fn warn(&mut self, loc: &Loc, msg: impl fmt::Display) {
        self.warnings.push(format!("{}: {msg}", loc.path));
    }

    fn check_list(&mut self, elements: &[ActiveElement], blocks: &[ManifestBlock], parent: &Loc, depth: usize) {
        let statics: Vec<&ActiveElement> = elements.iter().filter(|e| !e.dynamic).collect();
        let mut static_blocks: Vec<&ManifestBlock> = blocks.iter().filter(|b| !b.dynamic).collect();
        static_blocks.sort_by_key(|b| b.seq);

        for (i, el) in statics.iter().enumerate() {
            match static_blocks.get(i) {
                Some(block) => {
                    let loc = parent.child(&block.label(), block.seq);
                    self.check_block(el, block, &loc, depth);
                }
                None => {
                    let loc = parent.child(&format!("element {}", el.order_index), None);
                    self.flag(ViolationCode::UnexpectedElement, &loc, format!("{} not declared in the manifest", el.kind));
                }
            }
        }
        for block in static_blocks.iter().skip(statics.len()) {
            let loc = parent.child(&block.label(), block.seq);
            self.flag(ViolationCode::MissingElement, &loc, format!("declared {} was not found on the page", block.kind));
        }

        let dynamic_blocks: Vec<&ManifestBlock> = blocks.iter().filter(|b| b.dynamic).collect();
        for el in elements.iter().filter(|e| e.dynamic) {
            self.match_dynamic(el, &dynamic_blocks, parent, depth);
        }
    }

    /// Greedy first-fit: blocks of the same kind whose hash matches, then
    /// those whose src matches, in manifest order. The first candidate that
    /// passes every check wins; if none does, the first candidate's findings
    /// are reported.
    fn match_dynamic(&mut self, el: &ActiveElement, blocks: &[&ManifestBlock], parent: &Loc, depth: usize) {
        let by_hash = blocks.iter().filter(|b| {
            b.kind == el.kind && b.hash.as_ref().is_some_and(|h| el.digests.as_ref().and_then(|d| d.check(h)) == Some(true))
        });
        let by_src = blocks.iter().filter(|b| b.kind == el.kind && b.src.is_some() && b.src == el.src);
        let mut candidates: Vec<&ManifestBlock> = Vec::new();
        for b in by_hash.chain(by_src) {
            if !candidates.iter().any(|c| core::ptr::eq(*c, *b)) {
                candidates.push(b);
            }
        }
        let loc = parent.child(&format!("dynamic element {}", el.order_index), None);
        let mut first_failure: Option<Run<'c, 'a>> = None;
        for block in candidates {
            let mut trial = Run::new(self.ctx);
            trial.check_block(el, block, &loc, depth);
            if trial.violations.is_empty() {
                self.absorb(trial);
                return;
            }
            first_failure.get_or_insert(trial);
        }
        match first_failure {
            Some(trial) => self.absorb(trial),
            None => self.flag(ViolationCode::UnexpectedElement, &loc, format!("no dynamic block allows this {}", el.kind)),
        }
    }

    fn absorb(&mut self, other: Run<'c, 'a>) {
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
        self.chain.extend(other.chain);
    }

    fn check_block(&mut self, el: &ActiveElement, block: &ManifestBlock, loc: &Loc, depth: usize) {
        if el.kind != block.kind {
            self.flag(ViolationCode::KindMismatch, loc, format!("declared {}, found {}", block.kind, el.kind));
            return;
        }
        if !el.persistent && block.persistent {
            self.flag(ViolationCode::NotPersistent, loc, "element was removed but the block is persistent");
        }
        if let Some(want) = &block.crossorigin {
            if el.crossorigin.as_ref() != Some(want) {
                self.flag(
                    ViolationCode::CrossoriginMismatch,
                    loc,
                    format!("declared `{want}`, found `{}`", el.crossorigin.as_deref().unwrap_or("(none)")),
                );
            }
        }
        if block.kind.is_script() && block.load != el.load {
            self.flag(
                ViolationCode::LoadMismatch,
                loc,
                format!("declared {}, found {}", block.load.as_str(), el.load.as_str()),
            );
        }
        if block.kind.is_iframe() && block.sandbox.present && !el.sandbox.at_least_as_strict_as(&block.sandbox) {
            let found = if el.sandbox.present { format!("`{}`", el.sandbox.to_attr()) } else { "no sandbox".into() };
            self.flag(
                ViolationCode::SandboxTooPermissive,
                loc,
                format!("declared `{}`, found {found}", block.sandbox.to_attr()),
            );
        }
        match block.trust {
            TrustLevel::Assert => self.check_assert(el, block, loc, depth),
            TrustLevel::Delegate => self.check_delegate(el, block, loc, depth),
            TrustLevel::BlindTrust => {
                if block.src != el.src {
                    self.src_mismatch(block, el, loc);
                }
            }
        }
    }

    fn src_mismatch(&mut self, block: &ManifestBlock, el: &ActiveElement, loc: &Loc) {
        self.flag(
            ViolationCode::SrcMismatch,
            loc,
            format!(
                "declared `{}`, found `{}`",
                block.src.as_deref().unwrap_or("(none)"),
                el.src.as_deref().unwrap_or("(none)")
            ),
        );
    }

    fn check_assert(&mut self, el: &ActiveElement, block: &ManifestBlock, loc: &Loc, depth: usize) {
        if el.kind == ElementKind::Iframe(SrcType::ExternalUrl) && block.src.is_some() && block.src != el.src {
            self.src_mismatch(block, el, loc);
        }
        if let Some(nested) = &block.nested_manifest {
            let children = el.children.clone().or_else(|| self.measure_frame(el));
            match children {
                Some(children) => {
                    self.check_list(&children, nested, loc, depth);
                    return;
                }
                None if block.hash.is_none() => {
                    self.warn(loc, "iframe document unavailable; only frame attributes were checked");
                    return;
                }
                None => {}
            }
        }
        let Some(expected) = &block.hash else {
            return;
        };
        if el.kind == ElementKind::External && el.integrity.is_none() {
            self.warn(loc, "external script has no integrity attribute");
        }
        match el.digests.as_ref().and_then(|d| d.check(expected)) {
            Some(true) => {}
            Some(false) => {
                let found = el.content_hash().map(|h| h.to_string()).unwrap_or_default();
                self.flag(ViolationCode::HashMismatch, loc, format!("declared {expected}, found {found}"));
            }
            None => self.flag(
                ViolationCode::HashUnverifiable,
                loc,
                format!("content for {} could not be hashed with {}", el.kind, expected.algorithm()),
            ),
        }
    }

    fn measure_frame(&self, el: &ActiveElement) -> Option<Vec<ActiveElement>> {
        let src = el.src.as_deref()?;
        if el.kind != ElementKind::Iframe(SrcType::ExternalUrl) {
            return None;
        }
        let parser = self.ctx.parser?;
        let resp = self.ctx.fetcher.fetch(src)?;
        Measurer::new(parser, Some(self.ctx.fetcher)).extract_static(&resp.body, src).ok()
    }

    fn check_delegate(&mut self, el: &ActiveElement, block: &ManifestBlock, loc: &Loc, depth: usize) {
        if block.src != el.src {
            self.src_mismatch(block, el, loc);
            return;
        }
        let Some(src) = el.src.as_deref() else {
            self.flag(ViolationCode::DelegationUnresolvable, loc, "delegated element has no src");
            return;
        };
        if depth >= self.ctx.max_delegation_depth {
            self.flag(
                ViolationCode::DepthExceeded,
                loc,
                format!("more than {} delegations", self.ctx.max_delegation_depth),
            );
            return;
        }
        let manifest = match self.resolve_delegate(src) {
            Ok(m) => m,
            Err(why) => {
                self.flag(ViolationCode::DelegationUnresolvable, loc, format!("{src}: {why}"));
                return;
            }
        };
        self.chain.push(ChainLink { url: manifest.url.clone(), manifest_version: manifest.manifest_version.clone() });
        let inner = loc.child(&format!("[{}]", manifest.url), None);
        if el.kind.is_iframe() {
            match el.children.clone().or_else(|| self.measure_frame(el)) {
                Some(children) => self.check_list(&children, &manifest.contents, &inner, depth + 1),
                None => self.flag(ViolationCode::DelegationUnresolvable, loc, format!("{src}: document unavailable")),
            }
        } else {
            // A delegated script is judged by its provider's manifest as a
            // one-element page.
            let mut own = el.clone();
            own.dynamic = false;
            own.persistent = true;
            own.order_index = 0;
            self.check_list(&[own], &manifest.contents, &inner, depth + 1);
        }
    }

    fn resolve_delegate(&self, src: &str) -> Result<Manifest, String> {
        let resp = self.ctx.fetcher.fetch(src).ok_or("resource not found")?;
        let envelope = if let Some(inline) = resp.header(HEADER_MANIFEST) {
            SignedEnvelope::from_header_value(inline).map_err(|e| e.to_string())?
        } else if let Some(link) = resp.header(HEADER_LINK) {
            let linked = self.ctx.fetcher.fetch(link.trim()).ok_or_else(|| format!("manifest link {link} not found"))?;
            let text = core::str::from_utf8(&linked.body).map_err(|e| e.to_string())?;
            SignedEnvelope::from_json(text).map_err(|e| e.to_string())?
        } else {
            return Err("no signed manifest offered".into());
        };
        let verified =
            verify_envelope(&envelope, self.ctx.registry, self.ctx.now, self.ctx.cn_mode).map_err(|e| e.to_string())?;
        if verified.manifest.url != strip_query(src) {
            return Err(format!("signed manifest is for {}", verified.manifest.url));
        }
        Ok(verified.manifest)
    }
}

/// The most restrictive manifest the measured page satisfies: every element
/// asserted by hash, in measured order.
pub fn generate_manifest(report: &MeasurementReport) -> Manifest {
    let mut m = Manifest::new(&report.url, "v0");
    m.contents = generate_blocks(&report.elements);
    m
}

fn generate_blocks(elements: &[ActiveElement]) -> Vec<ManifestBlock> {
    let mut seq = 0;
    elements
        .iter()
        .map(|el| {
            let mut b = block_for(el);
            if !el.dynamic {
                b.seq = Some(seq);
                seq += 1;
            }
            b
        })
        .collect()
}

fn block_for(el: &ActiveElement) -> ManifestBlock {
    let nested = match (el.kind, &el.children) {
        (ElementKind::Iframe(_), Some(children)) => Some(generate_blocks(children)),
        _ => None,
    };
    let hash = el.content_hash().cloned();
    // Content that could not be hashed can only be pinned by its source.
    let trust = if hash.is_none() && nested.is_none() { TrustLevel::BlindTrust } else { TrustLevel::Assert };
    let mut b = ManifestBlock::new(el.kind, trust);
    b.hash = if nested.is_some() { None } else { hash };
    b.nested_manifest = nested;
    if matches!(el.kind, ElementKind::External | ElementKind::Iframe(SrcType::ExternalUrl)) {
        b.src = el.src.clone();
    }
    b.crossorigin = if el.kind == ElementKind::External { el.crossorigin.clone() } else { None };
    b.sandbox = if el.kind.is_iframe() { el.sandbox.clone() } else { Default::default() };
    b.load = if el.kind.is_script() { el.load } else { Default::default() };
    b.dynamic = el.dynamic;
    b.persistent = el.persistent;
    b
}
