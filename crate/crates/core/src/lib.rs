//! Core types and algorithms for accountable delivery of active web content.
//!
//! Everything in this crate is pure and allocation-only (`no_std` + `alloc`):
//! manifests and their validation, the active-content measurement model and
//! compliance evaluation, signed manifest envelopes, the append-only
//! transparency log state machine, and a deterministic protocol simulator
//! with trace-property checkers. HTML parsing, file storage, concurrency and
//! the command line live in the `accjs` companion crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod compliance;
pub mod crypto;
pub mod encoding;
pub mod log;
pub mod manifest;
pub mod measure;
pub mod sim;
pub mod sri;
pub mod time;
pub mod url;
pub mod version;

pub use compliance::{evaluate, generate_manifest, ComplianceVerdict, EvalContext, Violation, ViolationCode};
pub use manifest::{
    parse_manifest, serialize_manifest, validate_completeness, ElementKind, LoadMode, Manifest, ManifestBlock,
    ParseOptions, SandboxPolicy, SrcType, TrustLevel,
};
pub use measure::{ActiveElement, MeasurementReport, MutationEvent, RawElement};
pub use sri::{compute_sri, HashAlgorithm, SriHash};
pub use time::Timestamp;
pub use version::compare_versions;
