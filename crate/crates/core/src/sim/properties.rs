//! Trace properties, checked over a finished trace.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use super::scenario::Variant;
use super::trace::{ku, ContentLabel, TraceEvent, TraceRecord};
use crate::crypto::Role;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum PropertyStatus {
    Holds,
    /// `index` is the trace position of the first event without the
    /// required history.
    Violated { index: usize, reason: String },
    NotApplicable { reason: String },
}

impl PropertyStatus {
    pub fn holds(&self) -> bool {
        matches!(self, PropertyStatus::Holds)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyReport {
    pub name: &'static str,
    #[serde(flatten)]
    pub status: PropertyStatus,
}

/// Facts established so far while scanning a trace.
#[derive(Default)]
struct History {
    uploads: BTreeSet<(String, String, String)>,
    logged: BTreeSet<(String, String, Timestamp)>,
    sent: BTreeSet<(String, String, String, String)>,
    recent: BTreeSet<(u64, Timestamp)>,
    corrupted: BTreeSet<String>,
    corrupted_roles: BTreeSet<Role>,
    known: BTreeSet<String>,
}

impl History {
    fn record(&mut self, e: &TraceEvent) {
        match e {
            TraceEvent::DUploads { developer, url, phi } => {
                self.uploads.insert((developer.clone(), url.clone(), phi.clone()));
            }
            TraceEvent::Log { url, phi, ts } => {
                self.logged.insert((url.clone(), phi.clone(), *ts));
            }
            TraceEvent::WSend { server, url, phi, nonce } => {
                self.sent.insert((server.clone(), url.clone(), phi.clone(), nonce.clone()));
            }
            TraceEvent::CRecent { sid, ts } => {
                self.recent.insert((*sid, *ts));
            }
            TraceEvent::Corrupted { principal, role } => {
                self.corrupted.insert(principal.clone());
                self.corrupted_roles.insert(*role);
            }
            TraceEvent::KU { term } => {
                self.known.insert(term.clone());
            }
            _ => {}
        }
    }
}

/// Scans `trace`, calling `check` on every event before it is recorded.
fn scan(trace: &[TraceRecord], mut check: impl FnMut(&History, &TraceEvent) -> Option<String>) -> PropertyStatus {
    let mut h = History::default();
    for r in trace {
        if let Some(reason) = check(&h, &r.event) {
            return PropertyStatus::Violated { index: r.index, reason };
        }
        h.record(&r.event);
    }
    PropertyStatus::Holds
}

/// Every execution attributed to a developer follows that developer's upload
/// of the same manifest, unless the developer was corrupted and the adversary
/// knew the URL and the manifest digest.
pub fn authentication_of_origin(trace: &[TraceRecord]) -> PropertyStatus {
    origin_check(trace, false)
}

/// The guarantee that holds for hash publication through a broker: a
/// corrupted broker is an additional way around the developer.
pub fn weak_authentication_of_origin(trace: &[TraceRecord]) -> PropertyStatus {
    origin_check(trace, true)
}

fn origin_check(trace: &[TraceRecord], broker_excuse: bool) -> PropertyStatus {
    scan(trace, |h, e| {
        let TraceEvent::CExec { developer, url, phi, .. } = e else { return None };
        if h.uploads.contains(&(developer.clone(), url.clone(), phi.clone())) {
            return None;
        }
        if h.corrupted.contains(developer) && h.known.contains(&ku::url(url)) && h.known.contains(&ku::phi(phi)) {
            return None;
        }
        if broker_excuse && h.corrupted_roles.contains(&Role::Broker) {
            return None;
        }
        Some(format!("{developer} never uploaded {phi} for {url}"))
    })
}

/// Every execution relied on a logged manifest whose proof the client saw as
/// fresh.
pub fn transparency(trace: &[TraceRecord], variant: Variant) -> PropertyStatus {
    if variant == Variant::CodeVerify {
        return PropertyStatus::NotApplicable { reason: "no log in this variant".into() };
    }
    scan(trace, |h, e| {
        let TraceEvent::CExecPrime { url, sid, phi, ts } = e else { return None };
        if !h.logged.contains(&(url.clone(), phi.clone(), *ts)) {
            return Some(format!("session {sid} ran {phi} for {url} without a log entry at {ts}"));
        }
        if !h.recent.contains(&(*sid, *ts)) {
            return Some(format!("session {sid} ran {phi} without a fresh proof for {ts}"));
        }
        None
    })
}

/// Every claim the public accepts points at a logged manifest and a response
/// the server sent, or could have been built with the server's leaked key.
pub fn accountability(trace: &[TraceRecord], variant: Variant) -> PropertyStatus {
    if variant == Variant::CodeVerify {
        return PropertyStatus::NotApplicable { reason: "deliveries carry no signed evidence".into() };
    }
    scan(trace, |h, e| {
        let TraceEvent::PAccept { server, url, phi, nonce, ts, .. } = e else { return None };
        if !h.logged.contains(&(url.clone(), phi.clone(), *ts)) {
            return Some(format!("accepted claim names {phi} for {url} at {ts}, which was never logged"));
        }
        let sent = h.sent.contains(&(server.clone(), url.clone(), phi.clone(), nonce.clone()));
        let forged = h.corrupted.contains(server) && h.known.contains(&ku::response(server, url, phi, nonce));
        if sent || forged {
            None
        } else {
            Some(format!("{server} never answered nonce {nonce} for {url}"))
        }
    })
}

/// Malicious code only runs after the developer of that site is corrupted.
pub fn end_to_end_necessity(trace: &[TraceRecord]) -> PropertyStatus {
    scan(trace, |h, e| match e {
        TraceEvent::CExec { developer, url, label: ContentLabel::Malicious, .. } if !h.corrupted.contains(developer) => {
            Some(format!("malicious code ran for {url} while {developer} was honest"))
        }
        _ => None,
    })
}

/// Whether `trace` shows that corrupting only the developer suffices: some
/// client ran malicious code and nobody but developers was corrupted.
pub fn sufficiency_witness(trace: &[TraceRecord]) -> bool {
    let only_developers = trace.iter().all(|r| match &r.event {
        TraceEvent::Corrupted { role, .. } => *role == Role::Developer,
        _ => true,
    });
    let ran = trace.iter().any(|r| matches!(r.event, TraceEvent::CExec { label: ContentLabel::Malicious, .. }));
    only_developers && ran
}

pub fn check_all(trace: &[TraceRecord], variant: Variant) -> Vec<PropertyReport> {
    let origin = match variant {
        Variant::AccountableJs => authentication_of_origin(trace),
        Variant::CodeVerify => weak_authentication_of_origin(trace),
    };
    vec![
        PropertyReport { name: "authentication-of-origin", status: origin },
        PropertyReport { name: "transparency", status: transparency(trace, variant) },
        PropertyReport { name: "accountability", status: accountability(trace, variant) },
        PropertyReport { name: "end-to-end-necessity", status: end_to_end_necessity(trace) },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(events: Vec<TraceEvent>) -> Vec<TraceRecord> {
        events.into_iter().enumerate().map(|(index, event)| TraceRecord { index, step: 0, event }).collect()
    }

    fn cexec(dev: &str, label: ContentLabel) -> TraceEvent {
        TraceEvent::CExec {
            client: "C".into(),
            developer: dev.into(),
            url: "u".into(),
            phi: "p".into(),
            content: "c".into(),
            label,
        }
    }

    #[test]
    fn origin_needs_upload_or_corruption_with_knowledge() {
        let up = TraceEvent::DUploads { developer: "D".into(), url: "u".into(), phi: "p".into() };
        assert!(authentication_of_origin(&rec(vec![up, cexec("D", ContentLabel::Benign)])).holds());
        assert_eq!(
            authentication_of_origin(&rec(vec![cexec("D", ContentLabel::Benign)])),
            PropertyStatus::Violated { index: 0, reason: "D never uploaded p for u".into() }
        );
        let corrupt = TraceEvent::Corrupted { principal: "D".into(), role: Role::Developer };
        let partial = rec(vec![corrupt.clone(), TraceEvent::KU { term: ku::url("u") }, cexec("D", ContentLabel::Malicious)]);
        assert!(!authentication_of_origin(&partial).holds());
        let full = rec(vec![
            corrupt,
            TraceEvent::KU { term: ku::url("u") },
            TraceEvent::KU { term: ku::phi("p") },
            cexec("D", ContentLabel::Malicious),
        ]);
        assert!(authentication_of_origin(&full).holds());
        // Order matters: the upload must come first.
        let late = rec(vec![cexec("D", ContentLabel::Benign), TraceEvent::DUploads { developer: "D".into(), url: "u".into(), phi: "p".into() }]);
        assert!(!authentication_of_origin(&late).holds());
    }

    #[test]
    fn weak_origin_accepts_broker_corruption() {
        let t = rec(vec![TraceEvent::Corrupted { principal: "B".into(), role: Role::Broker }, cexec("D", ContentLabel::Malicious)]);
        assert!(!authentication_of_origin(&t).holds());
        assert!(weak_authentication_of_origin(&t).holds());
    }

    #[test]
    fn transparency_requires_log_and_recent() {
        let ts = Timestamp(7);
        let exec = TraceEvent::CExecPrime { url: "u".into(), sid: 1, phi: "p".into(), ts };
        let log = TraceEvent::Log { url: "u".into(), phi: "p".into(), ts };
        let recent = TraceEvent::CRecent { sid: 1, ts };
        assert!(transparency(&rec(vec![log.clone(), recent.clone(), exec.clone()]), Variant::AccountableJs).holds());
        assert!(!transparency(&rec(vec![log, exec.clone()]), Variant::AccountableJs).holds());
        assert!(!transparency(&rec(vec![recent, exec.clone()]), Variant::AccountableJs).holds());
        assert!(matches!(transparency(&rec(vec![exec]), Variant::CodeVerify), PropertyStatus::NotApplicable { .. }));
    }

    #[test]
    fn necessity_and_sufficiency() {
        let bad = rec(vec![cexec("D", ContentLabel::Malicious)]);
        assert!(!end_to_end_necessity(&bad).holds());
        assert!(sufficiency_witness(&bad));
        let ok = rec(vec![TraceEvent::Corrupted { principal: "D".into(), role: Role::Developer }, cexec("D", ContentLabel::Malicious)]);
        assert!(end_to_end_necessity(&ok).holds());
        assert!(sufficiency_witness(&ok));
        let w = rec(vec![TraceEvent::Corrupted { principal: "W".into(), role: Role::WebServer }, cexec("D", ContentLabel::Malicious)]);
        assert!(!sufficiency_witness(&w));
    }
}
