//! Signed, timestamped statements about the latest log entry for a URL.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Digest32, LogEntry};
use crate::crypto::{verify_raw, Principal, PublicKey};
use crate::encoding::{base64_bytes, decode_tuple, encode_tuple};
use crate::time::{Timestamp, DAY};

pub const DEFAULT_FRESHNESS_WINDOW: u64 = DAY;
const LABEL: &str = "accjs/staple";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StapleError {
    #[error("staple signature does not verify")]
    BadSignature,
    #[error("staple issued at {issued_at} is not valid at {now} (window {window}s)")]
    StaleProof { issued_at: Timestamp, window: u64, now: Timestamp },
    #[error("malformed staple")]
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StapledProof {
    pub log_id: String,
    pub url: String,
    pub manifest_version: String,
    #[serde(with = "base64_bytes")]
    pub manifest_digest: Digest32,
    #[serde(with = "base64_bytes")]
    pub entry_digest: Digest32,
    pub entry_ts: Timestamp,
    pub issued_at: Timestamp,
    pub window: u64,
    #[serde(with = "base64_bytes")]
    pub sig: Vec<u8>,
}

impl StapledProof {
    pub(super) fn issue(log: &Principal, entry: &LogEntry, now: Timestamp, window: u64) -> Self {
        let mut p = StapledProof {
            log_id: log.cert_id.clone(),
            url: entry.url.clone(),
            manifest_version: entry.manifest_version.clone(),
            manifest_digest: entry.manifest_digest,
            entry_digest: entry.entry_digest,
            entry_ts: entry.ts,
            issued_at: now,
            window,
            sig: Vec::new(),
        };
        p.sig = log.sign_raw(&p.signed_bytes()).to_vec();
        p
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        encode_tuple(&[
            LABEL.as_bytes(),
            self.log_id.as_bytes(),
            self.url.as_bytes(),
            self.manifest_version.as_bytes(),
            &self.manifest_digest,
            &self.entry_digest,
            &self.entry_ts.to_be_bytes(),
            &self.issued_at.to_be_bytes(),
            &self.window.to_be_bytes(),
        ])
    }

    /// Compact binary form: the signed fields followed by the signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_tuple(&[self.signed_bytes().as_slice(), &self.sig])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StapleError> {
        let outer = decode_tuple(bytes).map_err(|_| StapleError::Malformed)?;
        let [signed, sig] = <[Vec<u8>; 2]>::try_from(outer).map_err(|_| StapleError::Malformed)?;
        let f = decode_tuple(&signed).map_err(|_| StapleError::Malformed)?;
        let [label, log_id, url, version, md, ed, ets, iat, win] =
            <[Vec<u8>; 9]>::try_from(f).map_err(|_| StapleError::Malformed)?;
        if label != LABEL.as_bytes() {
            return Err(StapleError::Malformed);
        }
        let text = |b: Vec<u8>| String::from_utf8(b).map_err(|_| StapleError::Malformed);
        let digest = |b: Vec<u8>| Digest32::try_from(b).map_err(|_| StapleError::Malformed);
        let num = |b: Vec<u8>| <[u8; 8]>::try_from(b).map(u64::from_be_bytes).map_err(|_| StapleError::Malformed);
        Ok(StapledProof {
            log_id: text(log_id)?,
            url: text(url)?,
            manifest_version: text(version)?,
            manifest_digest: digest(md)?,
            entry_digest: digest(ed)?,
            entry_ts: Timestamp(num(ets)?),
            issued_at: Timestamp(num(iat)?),
            window: num(win)?,
            sig,
        })
    }

    /// Whether this proof speaks about `entry`.
    pub fn covers(&self, entry: &LogEntry) -> bool {
        self.url == entry.url
            && self.manifest_version == entry.manifest_version
            && self.manifest_digest == entry.manifest_digest
            && self.entry_digest == entry.entry_digest
            && self.entry_ts == entry.ts
    }
}

/// Accepts iff the signature verifies and `now` lies in
/// `[issued_at, issued_at + window]`.
pub fn verify_staple(proof: &StapledProof, log_key: &PublicKey, now: Timestamp) -> Result<(), StapleError> {
    if !verify_raw(log_key, &proof.sig, &proof.signed_bytes()) {
        return Err(StapleError::BadSignature);
    }
    if now < proof.issued_at || now > proof.issued_at.plus(proof.window) {
        return Err(StapleError::StaleProof { issued_at: proof.issued_at, window: proof.window, now });
    }
    Ok(())
}
