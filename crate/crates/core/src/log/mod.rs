//! Append-only transparency log of signed manifests.
//!
//! Entries are grouped by URL with strictly increasing manifest versions and
//! timestamps. Every accepted entry is countersigned by the log (`sig_L`), and
//! the log issues short-lived signed statements about the latest entry for a
//! URL that web servers staple to their responses.

mod audit;
mod capacity;
mod record;
mod staple;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{verify_envelope, CryptoError, Principal, PublicKey, Registry, SignedEnvelope};
use crate::encoding::{base64_bytes, encode_tuple};
use crate::time::Timestamp;
use crate::url::{strip_query, CnMatch};
use crate::version::compare_versions;

pub use audit::{check_prefix_consistency, update_frequency};
pub use capacity::{capacity_estimate, growth_entries, CapacityModel, GrowthScenario};
pub use record::{decode_records, encode_record, DecodedLog, RecordError};
pub use staple::{verify_staple, StapleError, StapledProof, DEFAULT_FRESHNESS_WINDOW};

pub type Digest32 = [u8; 32];

const ENTRY_LABEL: &str = "accjs/log-entry";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("envelope rejected: {0}")]
    BadEnvelope(CryptoError),
    #[error("common name `{common_name}` does not cover `{url}`")]
    CommonNameMismatch { common_name: String, url: String },
    #[error("version `{submitted}` for {url} is not newer than `{latest}`")]
    NonMonotoneVersion { url: String, latest: String, submitted: String },
    #[error("no entry for {0}")]
    NotFound(String),
    #[error("log contents are inconsistent: {0}")]
    Corrupt(String),
}

/// What a developer (or anyone holding a signed manifest) hands the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub developer_id: String,
    pub envelope: SignedEnvelope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: u64,
    pub url: String,
    pub developer_id: String,
    pub manifest_version: String,
    #[serde(with = "base64_bytes")]
    pub manifest_digest: Digest32,
    #[serde(with = "base64_bytes")]
    pub entry_digest: Digest32,
    pub envelope: SignedEnvelope,
    pub ts: Timestamp,
    pub log_id: String,
    #[serde(with = "base64_bytes")]
    pub sig_l: Vec<u8>,
}

impl LogEntry {
    /// Fields covered by `sig_l`.
    pub fn signed_fields(&self) -> Vec<u8> {
        encode_tuple(&[
            ENTRY_LABEL.as_bytes(),
            self.url.as_bytes(),
            self.manifest_version.as_bytes(),
            &self.manifest_digest,
            &self.entry_digest,
            &self.ts.to_be_bytes(),
        ])
    }

    pub fn verify(&self, log_key: &PublicKey) -> bool {
        crate::crypto::verify_raw(log_key, &self.sig_l, &self.signed_fields())
    }
}

fn entry_digest(url: &str, version: &str, manifest_digest: &Digest32, env: &SignedEnvelope, developer: &str) -> Digest32 {
    Sha256::digest(encode_tuple(&[
        b"accjs/entry-digest".as_slice(),
        url.as_bytes(),
        version.as_bytes(),
        manifest_digest,
        &env.signature,
        developer.as_bytes(),
    ]))
    .into()
}

pub struct TransparencyLog {
    key: Principal,
    entries: Vec<LogEntry>,
    latest: BTreeMap<String, usize>,
    cn_mode: CnMatch,
}

impl TransparencyLog {
    pub fn new(key: Principal) -> Self {
        Self { key, entries: Vec::new(), latest: BTreeMap::new(), cn_mode: CnMatch::Exact }
    }

    pub fn with_cn_mode(mut self, mode: CnMatch) -> Self {
        self.cn_mode = mode;
        self
    }

    /// Rebuilds a log from stored entries, checking every invariant.
    pub fn from_entries(key: Principal, entries: Vec<LogEntry>) -> Result<Self, LogError> {
        let mut log = Self::new(key);
        for (i, e) in entries.into_iter().enumerate() {
            if e.index != i as u64 {
                return Err(LogError::Corrupt(alloc::format!("entry {i} carries index {}", e.index)));
            }
            if !e.verify(&log.key.public_key()) {
                return Err(LogError::Corrupt(alloc::format!("entry {i} has an invalid log signature")));
            }
            if let Some(prev) = log.entries.last() {
                if e.ts <= prev.ts {
                    return Err(LogError::Corrupt(alloc::format!("entry {i} timestamp does not increase")));
                }
            }
            if let Some(cur) = log.latest(&e.url) {
                if compare_versions(&e.manifest_version, &cur.manifest_version) != Ok(Ordering::Greater) {
                    return Err(LogError::Corrupt(alloc::format!("entry {i} version does not increase")));
                }
            }
            log.latest.insert(e.url.clone(), i);
            log.entries.push(e);
        }
        Ok(log)
    }

    pub fn cert_id(&self) -> &str {
        &self.key.cert_id
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks a submission without appending it. Returns the url and
    /// version it would be filed under.
    pub fn precheck(&self, sub: &Submission, registry: &Registry, now: Timestamp) -> Result<(String, String), LogError> {
        let verified = verify_envelope(&sub.envelope, registry, now, self.cn_mode).map_err(|e| match e {
            CryptoError::CommonNameMismatch { common_name, url } => LogError::CommonNameMismatch { common_name, url },
            other => LogError::BadEnvelope(other),
        })?;
        let url = strip_query(&verified.manifest.url).to_string();
        let version = verified.manifest.manifest_version;
        if let Some(cur) = self.latest(&url) {
            if compare_versions(&version, &cur.manifest_version) != Ok(Ordering::Greater) {
                return Err(LogError::NonMonotoneVersion { url, latest: cur.manifest_version.clone(), submitted: version });
            }
        }
        Ok((url, version))
    }

    /// Verifies and appends a submission. The entry timestamp is `now`, or
    /// one tick after the previous entry if the clock has not advanced.
    pub fn submit(&mut self, sub: &Submission, registry: &Registry, now: Timestamp) -> Result<LogEntry, LogError> {
        let (url, version) = self.precheck(sub, registry, now)?;
        let ts = match self.entries.last() {
            Some(prev) if prev.ts >= now => prev.ts.plus(1),
            _ => now,
        };
        let manifest_digest: Digest32 = Sha256::digest(&sub.envelope.body).into();
        let mut entry = LogEntry {
            index: self.entries.len() as u64,
            entry_digest: entry_digest(&url, &version, &manifest_digest, &sub.envelope, &sub.developer_id),
            url: url.clone(),
            developer_id: sub.developer_id.clone(),
            manifest_version: version,
            manifest_digest,
            envelope: sub.envelope.clone(),
            ts,
            log_id: self.key.cert_id.clone(),
            sig_l: Vec::new(),
        };
        entry.sig_l = self.key.sign_raw(&entry.signed_fields()).to_vec();
        self.latest.insert(url, self.entries.len());
        self.entries.push(entry.clone());
        Ok(entry)
    }

    pub fn latest(&self, url: &str) -> Option<&LogEntry> {
        self.latest.get(strip_query(url)).map(|&i| &self.entries[i])
    }

    /// Every entry for `url`, in append order.
    pub fn audit_history(&self, url: &str) -> Vec<&LogEntry> {
        let url = strip_query(url);
        self.entries.iter().filter(|e| e.url == url).collect()
    }

    /// The entry for `url` that was latest at time `t`.
    pub fn latest_at(&self, url: &str, t: Timestamp) -> Option<&LogEntry> {
        self.audit_history(url).into_iter().rev().find(|e| e.ts <= t)
    }

    pub fn staple(&self, url: &str, now: Timestamp, window: u64) -> Result<StapledProof, LogError> {
        let entry = self.latest(url).ok_or_else(|| LogError::NotFound(url.to_string()))?;
        Ok(StapledProof::issue(&self.key, entry, now, window))
    }
}

/// Read-only access to a log's public state, enough to check claims.
pub trait LogView {
    fn log_id(&self) -> &str;
    fn log_key(&self) -> PublicKey;
    fn log_entries(&self) -> &[LogEntry];

    /// The entry for `url` that was latest at time `t`.
    fn entry_at(&self, url: &str, t: Timestamp) -> Option<&LogEntry> {
        let url = strip_query(url);
        self.log_entries().iter().rev().find(|e| e.url == url && e.ts <= t)
    }
}

impl LogView for TransparencyLog {
    fn log_id(&self) -> &str {
        self.cert_id()
    }

    fn log_key(&self) -> PublicKey {
        self.public_key()
    }

    fn log_entries(&self) -> &[LogEntry] {
        &self.entries
    }
}

/// Entries read back from storage together with the log's public key, for
/// parties that do not hold the log's signing key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogSnapshot {
    log_id: String,
    key: PublicKey,
    entries: Vec<LogEntry>,
}

impl LogSnapshot {
    /// Checks indices, log signatures and timestamp order.
    pub fn new(log_id: &str, key: PublicKey, entries: Vec<LogEntry>) -> Result<Self, LogError> {
        for (i, e) in entries.iter().enumerate() {
            if e.index != i as u64 || e.log_id != log_id {
                return Err(LogError::Corrupt(alloc::format!("entry {i} does not belong at this position")));
            }
            if !e.verify(&key) {
                return Err(LogError::Corrupt(alloc::format!("entry {i} has an invalid log signature")));
            }
            if i > 0 && e.ts <= entries[i - 1].ts {
                return Err(LogError::Corrupt(alloc::format!("entry {i} timestamp does not increase")));
            }
        }
        Ok(Self { log_id: log_id.into(), key, entries })
    }
}

impl LogView for LogSnapshot {
    fn log_id(&self) -> &str {
        &self.log_id
    }

    fn log_key(&self) -> PublicKey {
        self.key
    }

    fn log_entries(&self) -> &[LogEntry] {
        &self.entries
    }
}

/// Convenience check of an entry's log signature through the registry.
pub fn verify_entry(entry: &LogEntry, registry: &Registry) -> bool {
    registry.channel_key(&entry.log_id).is_ok_and(|pk| entry.verify(&pk))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::{sign_envelope, test_principal, Role};
    use crate::manifest::Manifest;
    use crate::time::DAY;

    pub(crate) struct Fixture {
        pub dev: Principal,
        pub dev_cert: crate::crypto::CertRecord,
        pub registry: Registry,
        pub log: TransparencyLog,
    }

    pub(crate) fn fixture() -> Fixture {
        let (dev, dev_cert) = test_principal("dev", Role::Developer, "helloworld.com", 31);
        let (log_key, log_cert) = test_principal("log", Role::Log, "log.example", 32);
        let mut registry = Registry::new();
        registry.insert(dev_cert.clone());
        registry.insert(log_cert);
        Fixture { dev, dev_cert, registry, log: TransparencyLog::new(log_key) }
    }

    pub(crate) fn submission(f: &Fixture, url: &str, version: &str, now: u64) -> Submission {
        let m = Manifest::new(url, version);
        let envelope = sign_envelope(&f.dev, &f.dev_cert, &m, Timestamp(now), DAY, CnMatch::Exact).unwrap();
        Submission { developer_id: f.dev.id.clone(), envelope }
    }

    const URL: &str = "http://www.helloworld.com/";

    #[test]
    fn versions_and_timestamps_increase() {
        let mut f = fixture();
        let a = f.log.submit(&submission(&f, URL, "v0", 10), &f.registry, Timestamp(10)).unwrap();
        let b = f.log.submit(&submission(&f, URL, "v2", 10), &f.registry, Timestamp(10)).unwrap();
        assert!(b.ts > a.ts);
        assert_eq!(f.log.latest(URL).unwrap().manifest_version, "v2");
        let err = f.log.submit(&submission(&f, URL, "v2", 11), &f.registry, Timestamp(11)).unwrap_err();
        assert!(matches!(err, LogError::NonMonotoneVersion { .. }));
        assert!(matches!(
            f.log.submit(&submission(&f, URL, "v1", 11), &f.registry, Timestamp(11)),
            Err(LogError::NonMonotoneVersion { .. })
        ));
        assert_eq!(f.log.len(), 2);
        assert!(f.log.latest("http://unknown.com/").is_none());
    }

    #[test]
    fn entries_verify_under_log_key() {
        let mut f = fixture();
        let e = f.log.submit(&submission(&f, URL, "v0", 0), &f.registry, Timestamp(0)).unwrap();
        assert!(e.verify(&f.log.public_key()));
        assert!(verify_entry(&e, &f.registry));
        let mut forged = e.clone();
        forged.manifest_version = "v9".into();
        assert!(!forged.verify(&f.log.public_key()));
    }

    #[test]
    fn bad_envelopes_are_refused() {
        let mut f = fixture();
        let mut sub = submission(&f, URL, "v0", 0);
        sub.envelope.body[5] ^= 0x20;
        assert!(matches!(f.log.submit(&sub, &f.registry, Timestamp(0)), Err(LogError::BadEnvelope(CryptoError::BadSignature))));
        let sub = submission(&f, URL, "v0", 0);
        assert!(matches!(f.log.submit(&sub, &f.registry, Timestamp(DAY + 1)), Err(LogError::BadEnvelope(CryptoError::Expired))));
        assert!(f.log.is_empty());
    }

    #[test]
    fn snapshot_matches_log_and_checks_entries() {
        let mut f = fixture();
        for (i, v) in ["v0", "v1"].iter().enumerate() {
            let t = 10 * (i as u64 + 1);
            f.log.submit(&submission(&f, URL, v, t), &f.registry, Timestamp(t)).unwrap();
        }
        let snap = LogSnapshot::new(f.log.cert_id(), f.log.public_key(), f.log.entries().to_vec()).unwrap();
        assert_eq!(snap.entry_at(URL, Timestamp(15)), f.log.latest_at(URL, Timestamp(15)));
        assert_eq!(snap.entry_at(URL, Timestamp(5)), None);
        let mut tampered = f.log.entries().to_vec();
        tampered[1].manifest_version = "v7".into();
        assert!(LogSnapshot::new(f.log.cert_id(), f.log.public_key(), tampered).is_err());
        let mut reordered = f.log.entries().to_vec();
        reordered.swap(0, 1);
        assert!(LogSnapshot::new(f.log.cert_id(), f.log.public_key(), reordered).is_err());
    }

    #[test]
    fn history_and_latest_at() {
        let mut f = fixture();
        for (i, v) in ["v0", "v1", "v5"].iter().enumerate() {
            let t = 100 * (i as u64 + 1);
            f.log.submit(&submission(&f, URL, v, t), &f.registry, Timestamp(t)).unwrap();
        }
        f.log.submit(&submission(&f, "http://helloworld.com/other", "v0", 400), &f.registry, Timestamp(400)).unwrap();
        let hist: Vec<_> = f.log.audit_history(URL).iter().map(|e| e.manifest_version.clone()).collect();
        assert_eq!(hist, ["v0", "v1", "v5"]);
        assert_eq!(f.log.latest_at(URL, Timestamp(250)).unwrap().manifest_version, "v1");
        assert!(f.log.latest_at(URL, Timestamp(50)).is_none());
        // Latest equals the maximum over the full history.
        let max = f.log.audit_history(URL).into_iter().max_by(|a, b| compare_versions(&a.manifest_version, &b.manifest_version).unwrap()).unwrap();
        assert_eq!(max, f.log.latest(URL).unwrap());
    }

    #[test]
    fn rebuild_from_entries() {
        let mut f = fixture();
        f.log.submit(&submission(&f, URL, "v0", 0), &f.registry, Timestamp(0)).unwrap();
        f.log.submit(&submission(&f, URL, "v1", 0), &f.registry, Timestamp(0)).unwrap();
        let entries = f.log.entries().to_vec();
        let (log_key, _) = test_principal("log", Role::Log, "log.example", 32);
        let rebuilt = TransparencyLog::from_entries(log_key.clone(), entries.clone()).unwrap();
        assert_eq!(rebuilt.latest(URL).unwrap().manifest_version, "v1");
        let mut swapped = entries;
        swapped.swap(0, 1);
        assert!(TransparencyLog::from_entries(log_key, swapped).is_err());
    }
}
