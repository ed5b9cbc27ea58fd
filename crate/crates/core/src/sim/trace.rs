use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crypto::Role;
use crate::time::Timestamp;

/// Which of a site's two bodies a client ended up running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContentLabel {
    Benign,
    Malicious,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimVerdict {
    ConsistentDelivery,
    ProvenViolation,
}

/// Trace events. Digests (`phi`, `content`) and nonces are base64 strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    /// An honest developer hands a manifest with digest `phi` to the log.
    DUploads { developer: String, url: String, phi: String },
    /// The log appended an entry.
    Log { url: String, phi: String, ts: Timestamp },
    /// An honest server answered request nonce `nonce`.
    WSend { server: String, url: String, phi: String, nonce: String },
    /// Client session `sid` accepted a staple for the entry logged at `ts`
    /// as fresh.
    CRecent { sid: u64, ts: Timestamp },
    /// A client executed code it attributes to `developer`.
    CExec { client: String, developer: String, url: String, phi: String, content: String, label: ContentLabel },
    /// Same execution, keyed by session and the log timestamp it relied on.
    #[serde(rename = "c-exec-prime")]
    CExecPrime { url: String, sid: u64, phi: String, ts: Timestamp },
    /// The public accepted a claim against `server`.
    PAccept { server: String, url: String, phi: String, nonce: String, ts: Timestamp, verdict: ClaimVerdict },
    Corrupted { principal: String, role: Role },
    /// The adversary knows (or has just built) a term.
    #[serde(rename = "ku")]
    KU { term: String },
    // Annotations that carry no security meaning.
    ClientReject { client: String, sid: u64, reason: String },
    LogReject { url: String, reason: String },
    ClaimReject { client: String, reason: String },
    Dropped { message: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    pub step: usize,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Renders a trace as newline-delimited JSON.
pub fn to_ndjson(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

pub fn from_ndjson(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// KU term names used by the engine and the property checkers.
pub mod ku {
    use alloc::format;
    use alloc::string::String;

    pub fn url(url: &str) -> String {
        format!("url:{url}")
    }

    pub fn phi(phi: &str) -> String {
        format!("phi:{phi}")
    }

    pub fn nonce(n: &str) -> String {
        format!("nonce:{n}")
    }

    pub fn response(server: &str, url: &str, phi: &str, nonce: &str) -> String {
        format!("response:{server}|{url}|{phi}|{nonce}")
    }
}
