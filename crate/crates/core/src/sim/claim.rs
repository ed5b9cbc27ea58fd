//! Client claims about a delivery and their public verification.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::messages::{opt_b64, verify_response_sig, ServerResponse, SignedRequest};
use super::term::Term;
use super::trace::ClaimVerdict;
use crate::compliance::{evaluate, EvalContext, Violation};
use crate::crypto::{Registry, Role, SignedEnvelope};
use crate::encoding::base64_bytes;
use crate::log::{verify_staple, Digest32, LogView, StapledProof};
use crate::manifest::parse_manifest;
use crate::measure::{HtmlParser, Measurer, NoFetch};
use crate::url::{common_name_matches, CnMatch};

/// Everything a client kept from one delivery: its own signed request and the
/// server's signed answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub client: String,
    pub request: SignedRequest,
    pub server_cert: String,
    pub url: String,
    #[serde(with = "base64_bytes")]
    pub nonce: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub html: Vec<u8>,
    pub envelope: Option<SignedEnvelope>,
    pub staple: Option<StapledProof>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_b64")]
    pub sig_w: Option<Vec<u8>>,
}

impl Claim {
    pub fn from_response(client: &str, request: &SignedRequest, resp: &ServerResponse) -> Self {
        Self {
            client: client.into(),
            request: request.clone(),
            server_cert: resp.server_cert.clone(),
            url: resp.url.clone(),
            nonce: resp.nonce.clone(),
            html: resp.html.clone(),
            envelope: resp.envelope.clone(),
            staple: resp.staple.clone(),
            sig_w: resp.sig_w.clone(),
        }
    }

    pub fn term(&self) -> Term {
        let resp = ServerResponse {
            server_cert: self.server_cert.clone(),
            url: self.url.clone(),
            nonce: self.nonce.clone(),
            html: self.html.clone(),
            envelope: self.envelope.clone(),
            staple: self.staple.clone(),
            sig_w: self.sig_w.clone(),
        };
        Term::tuple(vec![Term::atom("claim"), Term::atom(&self.client), self.request.term(), resp.term()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimError {
    #[error("claim signature check failed: {0}")]
    BadClaimSignature(String),
    #[error("claim nonce does not match the signed request")]
    NonceMismatch,
    #[error("no log entry matches the stapled proof")]
    NoLogEntry,
    #[error("stapled entry was not the latest for the URL when the proof was issued")]
    NotLatest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClaimCheck {
    pub server_cert: String,
    pub url: String,
    #[serde(with = "base64_bytes")]
    pub phi: Digest32,
    #[serde(with = "base64_bytes")]
    pub nonce: Vec<u8>,
    pub ts: crate::time::Timestamp,
    pub verdict: ClaimVerdict,
    pub violations: Vec<Violation>,
}

fn bad(msg: &str) -> ClaimError {
    ClaimError::BadClaimSignature(msg.into())
}

/// Public verification: signatures and nonce binding, the log entry named by
/// the staple, that entry being current when the staple was issued, and a
/// fresh measurement of the delivered page against the logged manifest.
pub fn verify_claim(
    claim: &Claim,
    log: &dyn LogView,
    registry: &Registry,
    parser: &dyn HtmlParser,
) -> Result<ClaimCheck, ClaimError> {
    let (Some(sig_w), Some(staple)) = (&claim.sig_w, &claim.staple) else {
        return Err(bad("claim carries no server signature"));
    };

    let client_key = registry.channel_key(&claim.request.client_cert).map_err(|e| bad(&e.to_string()))?;
    if !claim.request.verify(&client_key) {
        return Err(bad("request signature"));
    }
    if claim.request.nonce != claim.nonce {
        return Err(ClaimError::NonceMismatch);
    }
    if claim.request.url != claim.url {
        return Err(bad("request names a different URL"));
    }

    let server = registry.get(&claim.server_cert).ok_or_else(|| bad("unknown server certificate"))?;
    if server.role != Role::WebServer || !common_name_matches(&server.subject_common_name, &claim.url, CnMatch::Exact) {
        return Err(bad("server certificate does not cover the URL"));
    }
    let server_key = registry.channel_key(&claim.server_cert).map_err(|e| bad(&e.to_string()))?;
    if !verify_response_sig(&server_key, sig_w, &claim.url, &claim.html, &claim.nonce, staple) {
        return Err(bad("server signature"));
    }

    if staple.log_id != log.log_id() {
        return Err(bad("staple from a different log"));
    }
    if verify_staple(staple, &log.log_key(), staple.issued_at).is_err() {
        return Err(bad("log signature"));
    }

    let entry = log.log_entries().iter().find(|e| staple.covers(e)).ok_or(ClaimError::NoLogEntry)?;
    match log.entry_at(&claim.url, staple.issued_at) {
        Some(cur) if cur.entry_digest == entry.entry_digest => {}
        _ => return Err(ClaimError::NotLatest),
    }

    let phi: Digest32 = Sha256::digest(&entry.envelope.body).into();
    let mut violations = Vec::new();
    let compliant = core::str::from_utf8(&entry.envelope.body)
        .ok()
        .and_then(|t| parse_manifest(t).ok())
        .and_then(|manifest| {
            let report = Measurer::new(parser, None).measure(&claim.html, &claim.url, &[]).ok()?;
            let ctx = EvalContext::new(&NoFetch, registry, entry.ts);
            let verdict = evaluate(&report, &manifest, &ctx).ok()?;
            violations = verdict.violations;
            Some(verdict.ok)
        })
        .unwrap_or(false);

    Ok(ClaimCheck {
        server_cert: claim.server_cert.clone(),
        url: claim.url.clone(),
        phi,
        nonce: claim.nonce.clone(),
        ts: entry.ts,
        verdict: if compliant { ClaimVerdict::ConsistentDelivery } else { ClaimVerdict::ProvenViolation },
        violations,
    })
}
