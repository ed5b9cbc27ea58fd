//! Deterministic execution of a [`Scenario`].
//!
//! Honest principals follow the protocol. Every message the adversary puts on
//! the network is audited against its knowledge first; an underivable
//! injection aborts the run.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::claim::{verify_claim, Claim};
use super::messages::{
    sign_response, verify_response_sig, HashRecord, MessageKind, Payload, ServerResponse, SignedRequest, WireMessage,
};
use super::scenario::{Scenario, Step, Variant};
use super::term::{Knowledge, Term};
use super::trace::{ku, ContentLabel, TraceEvent, TraceRecord};
use crate::compliance::{evaluate, generate_manifest, EvalContext};
use crate::crypto::{
    keygen, sign_envelope, verify_envelope, Principal, Registry, Role, SignedEnvelope, MAX_EXCHANGE_CERT_VALIDITY,
};
use crate::log::{verify_staple, LogEntry, StapleError, StapledProof, Submission, TransparencyLog};
use crate::manifest::Manifest;
use crate::measure::{HtmlParser, Measurer, NoFetch};
use crate::time::{Timestamp, DAY};
use crate::url::{common_name_matches, CnMatch};

const CHANNEL_CERT_VALIDITY: u64 = 365 * DAY;
const FLUSH_LIMIT: usize = 100_000;
const PUBLIC_LABELS: &[&str] =
    &["", "update", "receipt", "deploy", "refresh", "response", "claim", "hash-publish", "hash-query", "accjs/request", "accjs/sigw"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("step {step}: adversary cannot produce {kind:?} from {sender}: {reason}")]
    NonDerivable { step: usize, kind: MessageKind, sender: String, reason: String },
    #[error("step {step}: `{principal}` is not corrupted")]
    NotCorrupted { step: usize, principal: String },
    #[error("step {step}: {reason}")]
    Setup { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SessionResult {
    Pending,
    Executed { label: ContentLabel },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub sid: u64,
    pub client: String,
    pub url: String,
    #[serde(flatten)]
    pub result: SessionResult,
}

pub struct SimOutcome {
    pub variant: Variant,
    pub trace: Vec<TraceRecord>,
    pub sessions: Vec<SessionSummary>,
    /// Every claim a client stored, including ones never submitted.
    pub claims: Vec<Claim>,
    pub log: TransparencyLog,
    pub registry: Registry,
}

pub fn run_scenario(scenario: &Scenario, parser: &dyn HtmlParser) -> Result<SimOutcome, SimError> {
    let mut sim = Simulator::new(scenario.clone(), parser)?;
    sim.run()?;
    Ok(sim.finish())
}

struct Site {
    url: String,
    developer: String,
    server: String,
    benign: Vec<u8>,
    malicious: Vec<u8>,
    next_version: u64,
}

struct Deployment {
    html: Vec<u8>,
    envelope: Option<SignedEnvelope>,
    staple: Option<StapledProof>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Origin {
    Honest,
    Adversary,
}

enum SessionState {
    Waiting,
    AwaitingHash(Vec<u8>),
    Done,
}

struct Session {
    client: String,
    url: String,
    request: SignedRequest,
    state: SessionState,
}

enum Action {
    Step(Step),
    DeliverAt(usize),
    DropAt(usize),
    ReplayAt(usize),
}

pub struct Simulator<'p> {
    sc: Scenario,
    parser: &'p dyn HtmlParser,
    rng: ChaCha8Rng,
    now: Timestamp,
    step: usize,
    principals: BTreeMap<String, Principal>,
    by_cert: BTreeMap<String, String>,
    registry: Registry,
    log: TransparencyLog,
    sites: Vec<Site>,
    deployments: BTreeMap<(String, String), Deployment>,
    honest_pending: BTreeMap<(String, String), Vec<u8>>,
    adversary_pending: BTreeMap<(String, String), Vec<u8>>,
    sessions: Vec<Session>,
    summaries: Vec<SessionSummary>,
    stored_claims: BTreeMap<String, Vec<Claim>>,
    all_claims: Vec<Claim>,
    broker: BTreeMap<String, HashRecord>,
    pending: VecDeque<WireMessage>,
    observed: Vec<WireMessage>,
    knowledge: Knowledge,
    ku_seen: BTreeSet<String>,
    trace: Vec<TraceRecord>,
    next_id: u64,
}

fn b64(bytes: impl AsRef<[u8]>) -> String {
    STANDARD.encode(bytes)
}

fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl<'p> Simulator<'p> {
    pub fn new(sc: Scenario, parser: &'p dyn HtmlParser) -> Result<Self, SimError> {
        sc.validate().map_err(SimError::InvalidScenario)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let now = sc.start_time;
        let mut principals = BTreeMap::new();
        let mut registry = Registry::new();
        let mut add = |id: &str, role: Role, cn: &str, rng: &mut ChaCha8Rng| -> Result<(), SimError> {
            let validity = if role.signs_exchanges() { MAX_EXCHANGE_CERT_VALIDITY } else { CHANNEL_CERT_VALIDITY };
            let (p, cert) =
                keygen(id, role, cn, validity, now, rng).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
            registry.insert(cert);
            principals.insert(id.to_string(), p);
            Ok(())
        };
        for s in &sc.sites {
            add(&s.developer, Role::Developer, &s.common_name, &mut rng)?;
            add(&s.server, Role::WebServer, &s.common_name, &mut rng)?;
        }
        for c in &sc.clients {
            add(c, Role::Client, c, &mut rng)?;
        }
        add(&sc.log, Role::Log, "log", &mut rng)?;
        add(&sc.broker, Role::Broker, "broker", &mut rng)?;

        let by_cert = principals.values().map(|p| (p.cert_id.clone(), p.id.clone())).collect();
        let keys = registry.certs().map(|c| (c.cert_id.clone(), c.public_key)).collect();
        let log = TransparencyLog::new(principals[&sc.log].clone());
        let sites = sc
            .sites
            .iter()
            .map(|s| Site {
                url: s.url.clone(),
                developer: s.developer.clone(),
                server: s.server.clone(),
                benign: s.benign.as_bytes().to_vec(),
                malicious: s.malicious.as_bytes().to_vec(),
                next_version: 1,
            })
            .collect();

        let mut sim = Simulator {
            sc,
            parser,
            rng,
            now,
            step: 0,
            principals,
            by_cert,
            registry,
            log,
            sites,
            deployments: BTreeMap::new(),
            honest_pending: BTreeMap::new(),
            adversary_pending: BTreeMap::new(),
            sessions: Vec::new(),
            summaries: Vec::new(),
            stored_claims: BTreeMap::new(),
            all_claims: Vec::new(),
            broker: BTreeMap::new(),
            pending: VecDeque::new(),
            observed: Vec::new(),
            knowledge: Knowledge::new(keys),
            ku_seen: BTreeSet::new(),
            trace: Vec::new(),
            next_id: 0,
        };
        // Public knowledge: protocol labels, identities, URLs and the
        // adversary's own page.
        for l in PUBLIC_LABELS {
            sim.knowledge.observe(&Term::atom(l));
        }
        let certs: Vec<String> = sim.by_cert.keys().cloned().collect();
        for c in certs.iter().chain(sim.principals.keys().cloned().collect::<Vec<_>>().iter()) {
            sim.knowledge.observe(&Term::atom(c));
        }
        for i in 0..sim.sites.len() {
            let (url, mal) = (sim.sites[i].url.clone(), sim.sites[i].malicious.clone());
            sim.knowledge.observe(&Term::atom(&url));
            sim.knowledge.observe(&Term::Atom(mal));
            sim.ku(ku::url(&url));
        }
        Ok(sim)
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        match self.sc.steps.clone() {
            Some(steps) => {
                for (i, s) in steps.iter().enumerate() {
                    self.begin_step(i)?;
                    self.exec(s)?;
                }
                self.step = steps.len();
            }
            None => {
                for i in 0..self.sc.max_steps {
                    self.begin_step(i)?;
                    match self.random_action() {
                        Action::Step(s) => self.exec(&s)?,
                        Action::DeliverAt(idx) => {
                            let m = self.pending.remove(idx).expect("index in range");
                            self.deliver(m)?;
                        }
                        Action::DropAt(idx) => {
                            let m = self.pending.remove(idx).expect("index in range");
                            self.emit(TraceEvent::Dropped { message: m.id });
                        }
                        Action::ReplayAt(idx) => {
                            let m = self.observed[idx].clone();
                            self.send(&m.sender, &m.receiver, m.payload, Origin::Adversary)?;
                        }
                    }
                }
                self.step = self.sc.max_steps;
            }
        }
        self.flush()?;
        self.exec(&Step::SubmitClaims { client: None })?;
        self.flush()
    }

    pub fn finish(self) -> SimOutcome {
        SimOutcome {
            variant: self.sc.variant,
            trace: self.trace,
            sessions: self.summaries,
            claims: self.all_claims,
            log: self.log,
            registry: self.registry,
        }
    }

    fn begin_step(&mut self, i: usize) -> Result<(), SimError> {
        self.step = i;
        self.now = self.now.plus(1);
        let due: Vec<String> =
            self.sc.corruptions.iter().filter(|c| c.at_step == i).map(|c| c.principal.clone()).collect();
        for p in due {
            self.corrupt(&p)?;
        }
        Ok(())
    }

    fn emit(&mut self, event: TraceEvent) {
        self.trace.push(TraceRecord { index: self.trace.len(), step: self.step, event });
    }

    fn ku(&mut self, term: String) {
        if self.ku_seen.insert(term.clone()) {
            self.emit(TraceEvent::KU { term });
        }
    }

    fn corrupted(&self, id: &str) -> bool {
        self.principals.get(id).is_some_and(|p| p.corrupted)
    }

    fn require_corrupted(&self, id: &str) -> Result<(), SimError> {
        if self.corrupted(id) {
            Ok(())
        } else {
            Err(SimError::NotCorrupted { step: self.step, principal: id.into() })
        }
    }

    fn site_index(&self, url: &str) -> Result<usize, SimError> {
        self.sites
            .iter()
            .position(|s| s.url == url)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown site `{url}`")))
    }

    fn label_of(&self, url: &str, html: &[u8]) -> ContentLabel {
        match self.sites.iter().find(|s| s.url == url) {
            Some(s) if s.benign == html => ContentLabel::Benign,
            Some(s) if s.malicious == html => ContentLabel::Malicious,
            _ => ContentLabel::Other,
        }
    }

    fn corrupt(&mut self, id: &str) -> Result<(), SimError> {
        if id == self.sc.log || id == self.sc.public {
            return Err(SimError::InvalidScenario(format!("`{id}` is trusted and cannot be corrupted")));
        }
        let p = self.principals.get_mut(id).ok_or_else(|| SimError::InvalidScenario(format!("unknown principal `{id}`")))?;
        if p.corrupted {
            return Ok(());
        }
        p.corrupted = true;
        let (role, cert) = (p.role, p.cert_id.clone());
        self.knowledge.leak_key(&cert);
        // The adversary learns the principal's state.
        let held: Vec<Term> = self
            .deployments
            .iter()
            .filter(|((server, _), _)| server == id)
            .map(|((_, url), d)| {
                Payload::Deploy { url: url.clone(), html: d.html.clone(), envelope: d.envelope.clone(), staple: d.staple.clone() }
                    .term()
            })
            .collect();
        for t in &held {
            self.knowledge.observe(t);
        }
        self.emit(TraceEvent::Corrupted { principal: id.into(), role });
        Ok(())
    }

    fn observe_ku(&mut self, payload: &Payload) {
        match payload {
            Payload::UpdateToLog(s) => self.ku(ku::phi(&b64(sha(&s.envelope.body)))),
            Payload::LogReceipt { entry, .. } => self.ku(ku::phi(&b64(entry.manifest_digest))),
            Payload::ClientRequest(r) => self.ku(ku::nonce(&b64(&r.nonce))),
            Payload::ServerResponse(r) => {
                if let Some(env) = &r.envelope {
                    self.ku(ku::phi(&b64(sha(&env.body))));
                }
                self.ku(ku::nonce(&b64(&r.nonce)));
            }
            _ => {}
        }
    }

    fn send(&mut self, sender: &str, receiver: &str, payload: Payload, origin: Origin) -> Result<(), SimError> {
        let term = payload.term();
        if origin == Origin::Adversary {
            let fail = |reason: &str| SimError::NonDerivable {
                step: self.step,
                kind: payload.kind(),
                sender: sender.into(),
                reason: reason.into(),
            };
            if payload.private_channel() && !self.corrupted(sender) {
                return Err(fail("private channel of an honest sender"));
            }
            if !self.knowledge.derivable(&term, self.sc.max_derivation_depth) {
                return Err(fail("term is not derivable from adversary knowledge"));
            }
        }
        let msg = WireMessage { id: self.next_id, sender: sender.into(), receiver: receiver.into(), payload };
        self.next_id += 1;
        if !msg.payload.private_channel() || self.corrupted(receiver) || self.corrupted(sender) {
            self.knowledge.observe(&term);
            self.observe_ku(&msg.payload);
        }
        if !msg.payload.private_channel() {
            self.observed.push(msg.clone());
        }
        self.pending.push_back(msg);
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SimError> {
        for _ in 0..FLUSH_LIMIT {
            let Some(m) = self.pending.pop_front() else {
                return Ok(());
            };
            self.deliver(m)?;
        }
        Err(SimError::Setup { step: self.step, reason: "network did not quiesce".into() })
    }

    fn random_action(&mut self) -> Action {
        let mut c: Vec<(u64, Action)> = Vec::new();
        let n = self.pending.len();
        if n > 0 {
            let i = self.rng.next_u64() as usize % n;
            c.push((12, Action::DeliverAt(i)));
            let j = self.rng.next_u64() as usize % n;
            c.push((1, Action::DropAt(j)));
        }
        if !self.observed.is_empty() {
            let i = self.rng.next_u64() as usize % self.observed.len();
            c.push((1, Action::ReplayAt(i)));
        }
        let client = self.sc.clients[self.rng.next_u64() as usize % self.sc.clients.len()].clone();
        let si = self.rng.next_u64() as usize % self.sites.len();
        let (url, dev, server) = (self.sites[si].url.clone(), self.sites[si].developer.clone(), self.sites[si].server.clone());
        c.push((3, Action::Step(Step::Deliver { client: client.clone(), url: url.clone() })));
        c.push((1, Action::Step(Step::Publish { url: url.clone() })));
        if self.corrupted(&dev) {
            c.push((2, Action::Step(Step::AdversaryPublish { url: url.clone() })));
        }
        let waiting = self.pending.iter().any(
            |m| matches!(&m.payload, Payload::ClientRequest(r) if r.url == url) && m.receiver == server,
        );
        if self.corrupted(&server) && waiting {
            c.push((3, Action::Step(Step::ServeMalicious { url: url.clone() })));
        }
        if self.pending.iter().any(|m| matches!(&m.payload, Payload::ServerResponse(r) if r.url == url)) {
            c.push((1, Action::Step(Step::TamperResponses { url: url.clone() })));
        }
        if self.sc.variant == Variant::AccountableJs {
            c.push((2, Action::Step(Step::RefreshStaple { url: url.clone() })));
        }
        let w = self.sc.freshness_window.max(2);
        let secs = self.rng.next_u64() % (w + w / 2);
        c.push((1, Action::Step(Step::AdvanceClock { secs })));
        if self.stored_claims.values().any(|v| !v.is_empty()) {
            c.push((2, Action::Step(Step::SubmitClaims { client: None })));
        }
        if self.corrupted(&client) {
            c.push((1, Action::Step(Step::ForgeClaim { client, url: url.clone() })));
        }
        if self.sc.variant == Variant::CodeVerify && self.corrupted(&self.sc.broker.clone()) {
            c.push((2, Action::Step(Step::BrokerPublishMalicious { url })));
        }
        let total: u64 = c.iter().map(|(w, _)| w).sum();
        let mut pick = self.rng.next_u64() % total;
        for (w, a) in c {
            if pick < w {
                return a;
            }
            pick -= w;
        }
        unreachable!("pick is below the total weight")
    }

    pub fn exec(&mut self, step: &Step) -> Result<(), SimError> {
        match step {
            Step::Publish { url } => self.publish(url, Origin::Honest),
            Step::AdversaryPublish { url } => {
                let dev = self.sites[self.site_index(url)?].developer.clone();
                self.require_corrupted(&dev)?;
                self.publish(url, Origin::Adversary)
            }
            Step::Deliver { client, url } => self.start_session(client, url),
            Step::Corrupt { principal } => self.corrupt(principal),
            Step::AdvanceClock { secs } => {
                self.now = self.now.plus(*secs);
                Ok(())
            }
            Step::RefreshStaple { url } => {
                let server = self.sites[self.site_index(url)?].server.clone();
                match self.log.staple(url, self.now, self.sc.freshness_window) {
                    Ok(s) => {
                        let log = self.sc.log.clone();
                        self.send(&log, &server, Payload::StapleRefresh(s), Origin::Honest)
                    }
                    Err(_) => Ok(()),
                }
            }
            Step::Flush => self.flush(),
            Step::DeliverNext => match self.pending.pop_front() {
                Some(m) => self.deliver(m),
                None => Ok(()),
            },
            Step::DropNext => {
                if let Some(m) = self.pending.pop_front() {
                    self.emit(TraceEvent::Dropped { message: m.id });
                }
                Ok(())
            }
            Step::Replay { kind } => match self.observed.iter().rev().find(|m| m.kind() == *kind).cloned() {
                Some(m) => self.send(&m.sender, &m.receiver, m.payload, Origin::Adversary),
                None => Ok(()),
            },
            Step::ServeMalicious { url } => self.serve_malicious(url),
            Step::TamperResponses { url } => self.tamper(url),
            Step::ForgeClaim { client, url } => self.forge_claim(client, url),
            Step::SubmitClaims { client } => {
                let clients: Vec<String> = match client {
                    Some(c) => vec![c.clone()],
                    None => self.stored_claims.keys().cloned().collect(),
                };
                let public = self.sc.public.clone();
                for c in clients {
                    for claim in self.stored_claims.remove(&c).unwrap_or_default() {
                        self.send(&c, &public, Payload::ClaimSubmission(claim), Origin::Honest)?;
                    }
                }
                Ok(())
            }
            Step::BrokerPublishMalicious { url } => {
                let broker = self.sc.broker.clone();
                self.require_corrupted(&broker)?;
                let site = &self.sites[self.site_index(url)?];
                let hash = sha(&site.malicious);
                let publisher = site.developer.clone();
                let version = self.broker.get(url).map_or(1, |r| r.version + 1);
                self.ku(ku::phi(&b64(hash)));
                self.broker.insert(url.clone(), HashRecord { version, hash, publisher });
                Ok(())
            }
        }
    }

    fn manifest_for(&self, url: &str, html: &[u8], version: u64) -> Result<Manifest, SimError> {
        let report = Measurer::new(self.parser, None)
            .measure(html, url, &[])
            .map_err(|e| SimError::Setup { step: self.step, reason: format!("cannot measure {url}: {e}") })?;
        let mut m = generate_manifest(&report);
        m.manifest_version = format!("v{version}");
        Ok(m)
    }

    fn publish(&mut self, url: &str, origin: Origin) -> Result<(), SimError> {
        let i = self.site_index(url)?;
        let version = self.sites[i].next_version;
        self.sites[i].next_version += 1;
        let site = &self.sites[i];
        let (dev_id, server, url) = (site.developer.clone(), site.server.clone(), site.url.clone());
        let html = if origin == Origin::Honest { site.benign.clone() } else { site.malicious.clone() };
        let dev = self.principals[&dev_id].clone();
        match self.sc.variant {
            Variant::AccountableJs => {
                let m = self.manifest_for(&url, &html, version)?;
                let cert = self.registry.get(&dev.cert_id).expect("registered").clone();
                let env = sign_envelope(&dev, &cert, &m, self.now, self.sc.envelope_ttl, CnMatch::Exact)
                    .map_err(|e| SimError::Setup { step: self.step, reason: e.to_string() })?;
                let phi = b64(sha(&env.body));
                let key = (url.clone(), m.manifest_version.clone());
                if origin == Origin::Honest {
                    self.emit(TraceEvent::DUploads { developer: dev_id.clone(), url: url.clone(), phi });
                    self.honest_pending.insert(key, html);
                } else {
                    // The adversary computes the manifest and its digest itself.
                    self.knowledge.observe(&Term::Atom(env.signed_bytes()));
                    self.ku(ku::url(&url));
                    self.ku(ku::phi(&phi));
                    self.adversary_pending.insert(key, html);
                }
                let log = self.sc.log.clone();
                let sub = Submission { developer_id: dev_id.clone(), envelope: env };
                self.send(&dev_id, &log, Payload::UpdateToLog(sub), origin)
            }
            Variant::CodeVerify => {
                let hash = sha(&html);
                let phi = b64(hash);
                if origin == Origin::Honest {
                    self.emit(TraceEvent::DUploads { developer: dev_id.clone(), url: url.clone(), phi });
                } else {
                    self.knowledge.observe(&Term::atom(hash));
                    self.ku(ku::url(&url));
                    self.ku(ku::phi(&phi));
                }
                let broker = self.sc.broker.clone();
                let record = HashRecord { version, hash, publisher: dev_id.clone() };
                self.send(&dev_id, &broker, Payload::HashPublish { url: url.clone(), record }, origin)?;
                let deploy = Payload::Deploy { url, html, envelope: None, staple: None };
                self.send(&dev_id, &server, deploy, origin)
            }
        }
    }

    fn start_session(&mut self, client: &str, url: &str) -> Result<(), SimError> {
        let server = self.sites[self.site_index(url)?].server.clone();
        let principal =
            self.principals.get(client).ok_or_else(|| SimError::InvalidScenario(format!("unknown client `{client}`")))?;
        if principal.role != Role::Client {
            return Err(SimError::InvalidScenario(format!("`{client}` is not a client")));
        }
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let request = SignedRequest::sign(principal, url, &nonce);
        let sid = self.sessions.len() as u64;
        self.sessions.push(Session {
            client: client.into(),
            url: url.into(),
            request: request.clone(),
            state: SessionState::Waiting,
        });
        self.summaries.push(SessionSummary { sid, client: client.into(), url: url.into(), result: SessionResult::Pending });
        self.send(client, &server, Payload::ClientRequest(request), Origin::Honest)
    }

    fn serve_malicious(&mut self, url: &str) -> Result<(), SimError> {
        let i = self.site_index(url)?;
        let (server, mal) = (self.sites[i].server.clone(), self.sites[i].malicious.clone());
        self.require_corrupted(&server)?;
        let Some(dep) = self.deployments.get(&(server.clone(), url.to_string())) else {
            return Ok(());
        };
        let (envelope, staple) = (dep.envelope.clone(), dep.staple.clone());
        let mut intercepted = Vec::new();
        self.pending.retain(|m| match &m.payload {
            Payload::ClientRequest(r) if m.receiver == server && r.url == url => {
                intercepted.push(r.clone());
                false
            }
            _ => true,
        });
        let w = self.principals[&server].clone();
        for req in intercepted {
            let Some(client) = self.by_cert.get(&req.client_cert).cloned() else { continue };
            let sig_w = match (&envelope, &staple) {
                (Some(env), Some(staple)) => {
                    let phi = b64(sha(&env.body));
                    self.ku(ku::response(&server, url, &phi, &b64(&req.nonce)));
                    Some(sign_response(&w, url, &mal, &req.nonce, staple))
                }
                _ => None,
            };
            let resp = ServerResponse {
                server_cert: w.cert_id.clone(),
                url: url.into(),
                nonce: req.nonce.clone(),
                html: mal.clone(),
                envelope: envelope.clone(),
                staple: staple.clone(),
                sig_w,
            };
            self.send(&server, &client, Payload::ServerResponse(resp), Origin::Adversary)?;
        }
        Ok(())
    }

    fn tamper(&mut self, url: &str) -> Result<(), SimError> {
        let mal = self.sites[self.site_index(url)?].malicious.clone();
        let mut taken = Vec::new();
        self.pending.retain(|m| match &m.payload {
            Payload::ServerResponse(r) if r.url == url => {
                taken.push(m.clone());
                false
            }
            _ => true,
        });
        for m in taken {
            let Payload::ServerResponse(mut r) = m.payload else { continue };
            r.html = mal.clone();
            self.send(&m.sender, &m.receiver, Payload::ServerResponse(r), Origin::Adversary)?;
        }
        Ok(())
    }

    fn forge_claim(&mut self, client: &str, url: &str) -> Result<(), SimError> {
        self.require_corrupted(client)?;
        let i = self.site_index(url)?;
        let (server, mal) = (self.sites[i].server.clone(), self.sites[i].malicious.clone());
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        self.knowledge.observe(&Term::atom(nonce));
        let request = SignedRequest::sign(&self.principals[client], url, &nonce);
        // Reuse whatever log material has been seen for the URL.
        let (envelope, staple) = self
            .observed
            .iter()
            .rev()
            .find_map(|m| match &m.payload {
                Payload::LogReceipt { entry, staple } if entry.url == url => {
                    Some((Some(entry.envelope.clone()), Some(staple.clone())))
                }
                _ => None,
            })
            .unwrap_or((None, None));
        let mut garbage = vec![0u8; 64];
        self.rng.fill_bytes(&mut garbage);
        let claim = Claim {
            client: client.into(),
            request,
            server_cert: self.principals[&server].cert_id.clone(),
            url: url.into(),
            nonce: nonce.to_vec(),
            html: mal,
            envelope,
            staple,
            sig_w: Some(garbage),
        };
        let public = self.sc.public.clone();
        self.send(client, &public, Payload::ClaimSubmission(claim), Origin::Adversary)
    }

    fn deliver(&mut self, m: WireMessage) -> Result<(), SimError> {
        let WireMessage { sender, receiver, payload, .. } = m;
        match payload {
            Payload::UpdateToLog(sub) if receiver == self.sc.log => {
                match self.log.submit(&sub, &self.registry, self.now) {
                    Ok(entry) => {
                        self.emit(TraceEvent::Log { url: entry.url.clone(), phi: b64(entry.manifest_digest), ts: entry.ts });
                        let staple = self
                            .log
                            .staple(&entry.url, self.now, self.sc.freshness_window)
                            .expect("entry was just appended");
                        let log = self.sc.log.clone();
                        self.send(&log, &sender, Payload::LogReceipt { entry, staple }, Origin::Honest)?;
                    }
                    Err(e) => {
                        let url = sub.envelope.request_url.clone();
                        self.emit(TraceEvent::LogReject { url, reason: e.to_string() });
                    }
                }
                Ok(())
            }
            Payload::LogReceipt { entry, staple } => self.on_receipt(&receiver, entry, staple),
            Payload::Deploy { url, html, envelope, staple } => {
                let key = (receiver.clone(), url);
                let newer = match (self.deployments.get(&key).and_then(|d| d.staple.as_ref()), &staple) {
                    (Some(cur), Some(new)) => new.entry_ts > cur.entry_ts,
                    _ => true,
                };
                if newer {
                    self.deployments.insert(key, Deployment { html, envelope, staple });
                }
                Ok(())
            }
            Payload::StapleRefresh(s) => {
                if let Some(d) = self.deployments.get_mut(&(receiver, s.url.clone())) {
                    if let Some(cur) = &d.staple {
                        if cur.entry_digest == s.entry_digest && s.issued_at >= cur.issued_at {
                            d.staple = Some(s);
                        }
                    }
                }
                Ok(())
            }
            Payload::ClientRequest(req) => self.on_request(&receiver, req),
            Payload::ServerResponse(resp) => self.on_response(&receiver, resp),
            Payload::ClaimSubmission(claim) if receiver == self.sc.public => {
                match verify_claim(&claim, &self.log, &self.registry, self.parser) {
                    Ok(check) => {
                        let server = self.by_cert.get(&check.server_cert).cloned().unwrap_or(check.server_cert);
                        self.emit(TraceEvent::PAccept {
                            server,
                            url: check.url,
                            phi: b64(check.phi),
                            nonce: b64(&check.nonce),
                            ts: check.ts,
                            verdict: check.verdict,
                        });
                    }
                    Err(e) => self.emit(TraceEvent::ClaimReject { client: claim.client, reason: e.to_string() }),
                }
                Ok(())
            }
            Payload::HashPublish { url, record } if receiver == self.sc.broker => {
                if self.broker.get(&url).is_none_or(|r| record.version > r.version) {
                    self.broker.insert(url, record);
                }
                Ok(())
            }
            Payload::HashQuery { url, nonce, answer: None } if receiver == self.sc.broker => {
                let answer = self.broker.get(&url).cloned();
                let broker = self.sc.broker.clone();
                // An empty record tells the client there is nothing published.
                let answer = Some(answer.unwrap_or(HashRecord { version: 0, hash: [0; 32], publisher: String::new() }));
                self.send(&broker, &sender, Payload::HashQuery { url, nonce, answer }, Origin::Honest)
            }
            Payload::HashQuery { nonce, answer: Some(rec), .. } => self.on_hash_answer(&receiver, &nonce, rec),
            _ => Ok(()),
        }
    }

    fn on_receipt(&mut self, receiver: &str, entry: LogEntry, staple: StapledProof) -> Result<(), SimError> {
        let key = (entry.url.clone(), entry.manifest_version.clone());
        let Ok(i) = self.site_index(&entry.url) else { return Ok(()) };
        if self.sites[i].developer != receiver {
            return Ok(());
        }
        let server = self.sites[i].server.clone();
        let (html, origin) = if let Some(h) = self.honest_pending.remove(&key) {
            (h, Origin::Honest)
        } else if let Some(h) = self.adversary_pending.remove(&key) {
            (h, Origin::Adversary)
        } else {
            return Ok(());
        };
        let deploy = Payload::Deploy { url: entry.url.clone(), html, envelope: Some(entry.envelope), staple: Some(staple) };
        self.send(receiver, &server, deploy, origin)
    }

    fn on_request(&mut self, server: &str, req: SignedRequest) -> Result<(), SimError> {
        let Some(client) = self.by_cert.get(&req.client_cert).cloned() else { return Ok(()) };
        let Ok(key) = self.registry.channel_key(&req.client_cert) else { return Ok(()) };
        if !req.verify(&key) {
            return Ok(());
        }
        let Some(dep) = self.deployments.get(&(server.to_string(), req.url.clone())) else { return Ok(()) };
        let w = self.principals[server].clone();
        let mut resp = ServerResponse {
            server_cert: w.cert_id.clone(),
            url: req.url.clone(),
            nonce: req.nonce.clone(),
            html: dep.html.clone(),
            envelope: dep.envelope.clone(),
            staple: dep.staple.clone(),
            sig_w: None,
        };
        if self.sc.variant == Variant::AccountableJs {
            let (Some(env), Some(staple)) = (&resp.envelope, &resp.staple) else { return Ok(()) };
            resp.sig_w = Some(sign_response(&w, &resp.url, &resp.html, &resp.nonce, staple));
            self.emit(TraceEvent::WSend {
                server: server.into(),
                url: resp.url.clone(),
                phi: b64(sha(&env.body)),
                nonce: b64(&resp.nonce),
            });
        }
        self.send(server, &client, Payload::ServerResponse(resp), Origin::Honest)
    }

    fn waiting_session(&self, client: &str, nonce: &[u8]) -> Option<usize> {
        self.sessions
            .iter()
            .position(|s| s.client == client && s.request.nonce == nonce && matches!(s.state, SessionState::Waiting))
    }

    fn finish_session(&mut self, sid: usize, result: Result<ContentLabel, String>) {
        self.sessions[sid].state = SessionState::Done;
        match result {
            Ok(label) => self.summaries[sid].result = SessionResult::Executed { label },
            Err(reason) => {
                let client = self.sessions[sid].client.clone();
                self.summaries[sid].result = SessionResult::Rejected { reason: reason.clone() };
                self.emit(TraceEvent::ClientReject { client, sid: sid as u64, reason });
            }
        }
    }

    fn on_response(&mut self, client: &str, resp: ServerResponse) -> Result<(), SimError> {
        let Some(sid) = self.waiting_session(client, &resp.nonce) else { return Ok(()) };
        if resp.url != self.sessions[sid].url {
            return Ok(());
        }
        match self.sc.variant {
            Variant::AccountableJs => {
                let result = self.check_response(sid, &resp);
                self.finish_session(sid, result);
                Ok(())
            }
            Variant::CodeVerify => {
                self.sessions[sid].state = SessionState::AwaitingHash(resp.html.clone());
                let broker = self.sc.broker.clone();
                let q = Payload::HashQuery { url: resp.url.clone(), nonce: resp.nonce.clone(), answer: None };
                // Remember the unsigned delivery; it cannot be proven later.
                let claim = Claim::from_response(client, &self.sessions[sid].request, &resp);
                self.store_claim(client, claim);
                self.send(client, &broker, q, Origin::Honest)
            }
        }
    }

    fn store_claim(&mut self, client: &str, claim: Claim) {
        self.all_claims.push(claim.clone());
        self.stored_claims.entry(client.into()).or_default().push(claim);
    }

    /// The client-side checks of a signed delivery, in protocol order.
    fn check_response(&mut self, sid: usize, resp: &ServerResponse) -> Result<ContentLabel, String> {
        let (Some(env), Some(staple), Some(sig_w)) = (&resp.envelope, &resp.staple, &resp.sig_w) else {
            return Err("response lacks signed material".into());
        };
        let url = resp.url.clone();
        let server = self.registry.get(&resp.server_cert).ok_or("unknown server certificate")?;
        if server.role != Role::WebServer || !common_name_matches(&server.subject_common_name, &url, CnMatch::Exact) {
            return Err("server certificate does not cover the URL".into());
        }
        let wkey = self.registry.channel_key(&resp.server_cert).map_err(|e| e.to_string())?;
        if !verify_response_sig(&wkey, sig_w, &url, &resp.html, &resp.nonce, staple) {
            return Err("bad server signature".into());
        }
        let verified = verify_envelope(env, &self.registry, self.now, CnMatch::Exact).map_err(|e| e.to_string())?;
        if staple.log_id != self.log.cert_id() {
            return Err("staple from an unknown log".into());
        }
        let phi = sha(&env.body);
        if staple.url != url || staple.manifest_digest != phi || staple.manifest_version != verified.manifest.manifest_version
        {
            return Err("staple does not match the manifest".into());
        }
        match verify_staple(staple, &self.log.public_key(), self.now) {
            Ok(()) => self.emit(TraceEvent::CRecent { sid: sid as u64, ts: staple.entry_ts }),
            Err(StapleError::StaleProof { .. }) if !self.sc.client_checks_freshness => {}
            Err(e) => return Err(e.to_string()),
        }
        let client = self.sessions[sid].client.clone();
        let claim = Claim::from_response(&client, &self.sessions[sid].request, resp);
        self.store_claim(&client, claim);

        let report = Measurer::new(self.parser, None).measure(&resp.html, &url, &[]).map_err(|e| e.to_string())?;
        let ctx = EvalContext::new(&NoFetch, &self.registry, self.now);
        let verdict = evaluate(&report, &verified.manifest, &ctx).map_err(|e| e.to_string())?;
        if !verdict.ok {
            let codes: Vec<String> = verdict.violations.iter().map(|v| v.code.to_string()).collect();
            return Err(format!("page does not comply: {}", codes.join(", ")));
        }
        let developer = self.by_cert.get(&env.cert_id).cloned().unwrap_or_else(|| env.cert_id.clone());
        let label = self.label_of(&url, &resp.html);
        let phi = b64(phi);
        self.emit(TraceEvent::CExec {
            client,
            developer,
            url: url.clone(),
            phi: phi.clone(),
            content: b64(sha(&resp.html)),
            label,
        });
        self.emit(TraceEvent::CExecPrime { url, sid: sid as u64, phi, ts: staple.entry_ts });
        Ok(label)
    }

    fn on_hash_answer(&mut self, client: &str, nonce: &[u8], rec: HashRecord) -> Result<(), SimError> {
        let Some(sid) = self.sessions.iter().position(|s| {
            s.client == client && s.request.nonce == nonce && matches!(s.state, SessionState::AwaitingHash(_))
        }) else {
            return Ok(());
        };
        let SessionState::AwaitingHash(html) = core::mem::replace(&mut self.sessions[sid].state, SessionState::Done) else {
            unreachable!()
        };
        let result = if rec.publisher.is_empty() {
            Err("no published hash".into())
        } else if sha(&html) != rec.hash {
            Err("page hash differs from the published hash".into())
        } else {
            let url = self.sessions[sid].url.clone();
            let label = self.label_of(&url, &html);
            self.emit(TraceEvent::CExec {
                client: client.into(),
                developer: rec.publisher.clone(),
                url,
                phi: b64(rec.hash),
                content: b64(sha(&html)),
                label,
            });
            Ok(label)
        };
        self.finish_session(sid, result);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::tests_support::{doc, JsonDoc};
    use crate::measure::RawElement;

    fn sim(parser: &JsonDoc) -> Simulator<'_> {
        let b = String::from_utf8(doc(&[RawElement::new("script").text("f()")])).unwrap();
        let m = String::from_utf8(doc(&[RawElement::new("script").text("g()")])).unwrap();
        let mut s = Scenario::single_site("http://www.a.com/", "a.com", &b, &m);
        s.steps = Some(vec![]);
        Simulator::new(s, parser).unwrap()
    }

    #[test]
    fn audit_rejects_signatures_of_honest_principals() {
        let p = JsonDoc;
        let mut sim = sim(&p);
        sim.exec(&Step::Publish { url: "http://www.a.com/".into() }).unwrap();
        sim.flush().unwrap();
        let w = sim.principals["W"].clone();
        let dep = &sim.deployments[&("W".to_string(), "http://www.a.com/".to_string())];
        let staple = dep.staple.clone().unwrap();
        let resp = ServerResponse {
            server_cert: w.cert_id.clone(),
            url: "http://www.a.com/".into(),
            nonce: vec![1; 16],
            html: sim.sites[0].malicious.clone(),
            envelope: dep.envelope.clone(),
            staple: Some(staple.clone()),
            sig_w: Some(sign_response(&w, "http://www.a.com/", &sim.sites[0].malicious, &[1; 16], &staple)),
        };
        let err = sim.send("W", "C", Payload::ServerResponse(resp.clone()), Origin::Adversary).unwrap_err();
        assert!(matches!(err, SimError::NonDerivable { kind: MessageKind::ServerResponse, .. }));
        sim.corrupt("W").unwrap();
        // The nonce was never seen, so even with the key it is out of reach.
        assert!(sim.send("W", "C", Payload::ServerResponse(resp), Origin::Adversary).is_err());

        let deploy = Payload::Deploy { url: "http://www.a.com/".into(), html: vec![], envelope: None, staple: None };
        let err = sim.send("D", "W", deploy, Origin::Adversary).unwrap_err();
        assert!(matches!(err, SimError::NonDerivable { reason, .. } if reason.contains("private")));
    }
}
