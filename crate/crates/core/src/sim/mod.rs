//! Symbolic protocol simulator.
//!
//! Runs code stapling, delivery and claim verification between developers,
//! servers, clients, the log and the public under a Dolev-Yao network
//! adversary with scheduled corruptions, and records a trace that the checkers
//! in [`properties`] evaluate. The hash-publication variant replaces the log
//! with a broker and drops signatures from delivery.

mod claim;
mod engine;
mod messages;
pub mod properties;
mod scenario;
mod term;
mod trace;

pub use claim::{verify_claim, Claim, ClaimCheck, ClaimError};
pub use engine::{run_scenario, SessionResult, SessionSummary, SimError, SimOutcome, Simulator};
pub use messages::{
    sigw_message, sign_response, verify_response_sig, HashRecord, MessageKind, Payload, ServerResponse, SignedRequest,
    WireMessage,
};
pub use properties::{check_all, PropertyReport, PropertyStatus};
pub use scenario::{Corruption, Scenario, SiteSpec, Step, Variant};
pub use term::{Knowledge, Term};
pub use trace::{from_ndjson, ku, to_ndjson, ClaimVerdict, ContentLabel, TraceEvent, TraceRecord};

/// A scripted run in which only the developer is corrupted and publishes the
/// malicious page through the log; a client then runs it.
pub fn developer_compromise_fixture(site: SiteSpec) -> Scenario {
    let url = site.url.clone();
    let developer = site.developer.clone();
    let mut s = Scenario::single_site(&url, &site.common_name, &site.benign, &site.malicious);
    s.name = "developer-compromise".into();
    s.sites = alloc::vec![site];
    let client = s.clients[0].clone();
    s.steps = Some(alloc::vec![
        Step::Publish { url: url.clone() },
        Step::Flush,
        Step::Corrupt { principal: developer },
        Step::AdversaryPublish { url: url.clone() },
        Step::Flush,
        Step::Deliver { client, url },
        Step::Flush,
    ]);
    s
}
