//! Generators and checkers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use accjs::casestudy::MemSite;
use accjs::SharedLog;
use accjs_core::crypto::{keygen, sign_envelope, CertRecord, Principal, Registry, Role, SignedEnvelope};
use accjs_core::log::{check_prefix_consistency, LogEntry, Submission};
use accjs_core::manifest::Manifest;
use accjs_core::measure::{MutationAction, MutationEvent, MutationPhase, RawElement, Response};
use accjs_core::time::{Timestamp, DAY};
use accjs_core::url::CnMatch;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Rng(ChaCha20Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn percent(&mut self, p: usize) -> bool {
        self.below(100) < p
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    pub fn bytes(&mut self, n: usize) -> Vec<u8> {
        let mut v = vec![0; n];
        self.0.fill_bytes(&mut v);
        v
    }

    pub fn u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

pub const SANDBOX_TOKENS: [&str; 10] = [
    "allow-scripts",
    "allow-same-origin",
    "allow-forms",
    "allow-popups",
    "allow-modals",
    "allow-top-navigation",
    "allow-downloads",
    "allow-pointer-lock",
    "allow-presentation",
    "allow-orientation-lock",
];

pub fn random_tokens(rng: &mut Rng) -> Vec<&'static str> {
    SANDBOX_TOKENS.iter().copied().filter(|_| rng.percent(40)).collect()
}

const CODE_PIECES: [&str; 12] = [
    "x=1;", "f(a,b);", "console.log(\"hi\");", "if (a < b) { go(); }", "s = 'q\"z';", " ", "\n", "y && z;",
    "/* note */", "var é = 'ü';", "a[0] = {k: 2};", "return;",
];

pub fn random_code(rng: &mut Rng) -> String {
    let n = 1 + rng.below(5);
    (0..n).map(|_| *rng.pick(&CODE_PIECES)).collect::<Vec<_>>().concat() + &rng.below(1000).to_string()
}

pub fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A random page, a mutation stream over it and the resources it loads.
pub struct RandomPage {
    pub url: String,
    pub html: String,
    pub events: Vec<MutationEvent>,
    pub site: MemSite,
}

const PAGE_URL: &str = "https://app.example/index.html";

fn script_url(i: usize) -> String {
    format!("https://cdn.example/lib{i}.js")
}

fn frame_url(i: usize) -> String {
    format!("https://frames.example/f{i}.html")
}

pub fn random_page(rng: &mut Rng) -> RandomPage {
    let mut site = MemSite::default();
    // Some resources exist, others cannot be fetched.
    for i in 0..4 {
        site.insert(&script_url(i), Response { headers: Vec::new(), body: random_code(rng).into_bytes() });
    }
    for i in 0..2 {
        let inner = format!("<html><body><script>{}</script></body></html>", random_code(rng));
        site.insert(&frame_url(i), Response { headers: Vec::new(), body: inner.into_bytes() });
    }

    let mut body = String::new();
    let mut removable: Vec<RawElement> = Vec::new();
    for _ in 0..rng.below(9) {
        match rng.below(6) {
            0 => {
                let code = random_code(rng);
                body.push_str(&format!("<script>{code}</script>\n"));
                removable.push(RawElement::new("script").text(&code));
            }
            1 => {
                let url = script_url(rng.below(6));
                let mode = *rng.pick(&["", " async", " defer"]);
                let co = if rng.percent(30) { " crossorigin=\"anonymous\"" } else { "" };
                body.push_str(&format!("<script src=\"{url}\"{mode}{co}></script>\n"));
            }
            2 => {
                let code = random_code(rng);
                let ev = *rng.pick(&["onclick", "onload", "onmouseover"]);
                body.push_str(&format!("<button {ev}=\"{}\">b</button>\n", escape_attr(&code)));
            }
            3 => {
                let inner = format!("<p>hi</p><script>{}</script>", random_code(rng));
                let sb = sandbox_attr(rng);
                body.push_str(&format!("<iframe srcdoc=\"{}\"{sb}></iframe>\n", escape_attr(&inner)));
            }
            4 => {
                let sb = sandbox_attr(rng);
                body.push_str(&format!("<iframe src=\"{}\"{sb}></iframe>\n", frame_url(rng.below(3))));
            }
            _ => {
                let code = random_code(rng).replace('"', "'");
                body.push_str(&format!("<iframe src=\"javascript:{}\"></iframe>\n", escape_attr(&code)));
            }
        }
    }
    let html = format!("<!DOCTYPE html>\n<html><head><title>t</title></head><body>\n{body}</body></html>\n");

    let mut events = Vec::new();
    for _ in 0..rng.below(6) {
        let phase = if rng.percent(50) { MutationPhase::BeforeLoad } else { MutationPhase::AfterLoad };
        if !removable.is_empty() && rng.percent(30) {
            let el = removable.swap_remove(rng.below(removable.len()));
            events.push(MutationEvent { action: MutationAction::Remove, phase, element: el });
            continue;
        }
        let el = match rng.below(3) {
            0 => RawElement::new("script").text(&random_code(rng)),
            1 => RawElement::new("script").attr("src", &script_url(rng.below(6))),
            _ => RawElement::new("div").attr("onclick", &random_code(rng)),
        };
        removable.push(el.clone());
        events.push(MutationEvent { action: MutationAction::Add, phase, element: el });
    }
    RandomPage { url: PAGE_URL.into(), html, events, site }
}

fn sandbox_attr(rng: &mut Rng) -> String {
    if rng.percent(30) {
        String::new()
    } else {
        format!(" sandbox=\"{}\"", random_tokens(rng).join(" "))
    }
}

/// Keys and envelopes for concurrent log runs: versions `v1`..`v{n}` for
/// each URL, signed in advance.
pub struct LogBench {
    pub log_key: Principal,
    pub registry: Registry,
    pub envelopes: BTreeMap<(String, u32), SignedEnvelope>,
    pub urls: Vec<String>,
}

pub const BENCH_VERSIONS: u32 = 6;
pub const BENCH_TIME: Timestamp = Timestamp(1_767_225_600);

impl LogBench {
    pub fn new() -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let (dev, cert): (Principal, CertRecord) =
            keygen("dev", Role::Developer, "bench.example", 30 * DAY, BENCH_TIME, &mut rng).unwrap();
        let (log_key, log_cert) = keygen("log", Role::Log, "log.example", 30 * DAY, BENCH_TIME, &mut rng).unwrap();
        let mut registry = Registry::new();
        registry.insert(cert.clone());
        registry.insert(log_cert);
        let urls: Vec<String> = (0..2).map(|i| format!("https://bench.example/p{i}")).collect();
        let mut envelopes = BTreeMap::new();
        for url in &urls {
            for v in 1..=BENCH_VERSIONS {
                let m = Manifest::new(url, &format!("v{v}"));
                let env = sign_envelope(&dev, &cert, &m, BENCH_TIME, DAY, CnMatch::Exact).unwrap();
                envelopes.insert((url.clone(), v), env);
            }
        }
        LogBench { log_key, registry, envelopes, urls }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Submit { url: usize, version: u32 },
    Latest { url: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ret {
    /// Index of the appended entry, or `None` when refused as not newer.
    Submitted(Option<u64>),
    /// Latest version number.
    Latest(Option<u32>),
}

#[derive(Debug, Clone)]
pub struct Call {
    pub op: Op,
    pub ret: Ret,
    pub invoked: u64,
    pub returned: u64,
}

fn version_number(v: &str) -> u32 {
    v.strip_prefix('v').and_then(|n| n.parse().ok()).expect("bench version")
}

/// Runs `threads` workers with `per_thread` random operations each against
/// one shared log and returns the timed history and every snapshot a reader
/// took along the way.
pub fn concurrent_history(bench: &LogBench, seed: u64, threads: usize, per_thread: usize) -> (Vec<Call>, Vec<Vec<LogEntry>>, Vec<LogEntry>) {
    let log = Arc::new(SharedLog::in_memory(bench.log_key.clone()));
    let clock = Arc::new(AtomicU64::new(0));
    let start = Arc::new(Barrier::new(threads));
    let mut handles = Vec::new();
    for t in 0..threads {
        let log = Arc::clone(&log);
        let start = Arc::clone(&start);
        let clock = Arc::clone(&clock);
        let mut rng = Rng::new(seed.wrapping_mul(1000).wrapping_add(t as u64));
        let ops: Vec<Op> = (0..per_thread)
            .map(|_| {
                let url = rng.below(bench.urls.len());
                if rng.percent(70) {
                    Op::Submit { url, version: 1 + rng.below(BENCH_VERSIONS as usize) as u32 }
                } else {
                    Op::Latest { url }
                }
            })
            .collect();
        let envs: Vec<Option<SignedEnvelope>> = ops
            .iter()
            .map(|op| match op {
                Op::Submit { url, version } => Some(bench.envelopes[&(bench.urls[*url].clone(), *version)].clone()),
                Op::Latest { .. } => None,
            })
            .collect();
        let urls = bench.urls.clone();
        let registry = bench.registry.clone();
        handles.push(thread::spawn(move || {
            let mut calls = Vec::new();
            let mut snaps = Vec::new();
            start.wait();
            for (op, env) in ops.into_iter().zip(envs) {
                let invoked = clock.fetch_add(1, Ordering::SeqCst);
                let ret = match (&op, env) {
                    (Op::Submit { .. }, Some(envelope)) => {
                        let sub = Submission { developer_id: "dev".into(), envelope };
                        match log.submit(&sub, &registry, BENCH_TIME) {
                            Ok(e) => Ret::Submitted(Some(e.index)),
                            Err(accjs::Error::Log(accjs_core::log::LogError::NonMonotoneVersion { .. })) => {
                                Ret::Submitted(None)
                            }
                            Err(e) => panic!("unexpected submit error: {e}"),
                        }
                    }
                    (Op::Latest { url }, _) => {
                        let r = Ret::Latest(log.latest(&urls[*url]).map(|e| version_number(&e.manifest_version)));
                        snaps.push(log.entries());
                        r
                    }
                    _ => unreachable!(),
                };
                let returned = clock.fetch_add(1, Ordering::SeqCst);
                calls.push(Call { op, ret, invoked, returned });
            }
            (calls, snaps)
        }));
    }
    let mut calls = Vec::new();
    let mut snaps = Vec::new();
    for h in handles {
        let (c, s) = h.join().expect("worker");
        calls.extend(c);
        snaps.extend(s);
    }
    (calls, snaps, log.entries())
}

/// Sequential model: latest version per URL and the number of entries.
#[derive(Clone, Default)]
struct Model {
    latest: Vec<Option<u32>>,
    len: u64,
}

impl Model {
    fn apply(&self, op: &Op) -> (Ret, Model) {
        let mut next = self.clone();
        match op {
            Op::Submit { url, version } => {
                if self.latest[*url].is_some_and(|cur| *version <= cur) {
                    (Ret::Submitted(None), next)
                } else {
                    next.latest[*url] = Some(*version);
                    next.len += 1;
                    (Ret::Submitted(Some(self.len)), next)
                }
            }
            Op::Latest { url } => (Ret::Latest(self.latest[*url]), next),
        }
    }
}

/// Searches for a sequential order of `calls` that respects real-time order
/// and reproduces every observed return value.
pub fn linearizable(calls: &[Call], urls: usize) -> bool {
    assert!(calls.len() <= 64, "history too long for the search");
    let mut seen: HashMap<u64, bool> = HashMap::new();
    search(calls, 0, &Model { latest: vec![None; urls], len: 0 }, &mut seen)
}

fn search(calls: &[Call], done: u64, model: &Model, seen: &mut HashMap<u64, bool>) -> bool {
    if done.count_ones() as usize == calls.len() {
        return true;
    }
    // The model state is a function of the set of linearized calls, so
    // failures can be memoized on that set.
    if let Some(&r) = seen.get(&done) {
        return r;
    }
    let pending = |i: usize| done & (1 << i) == 0;
    let horizon = (0..calls.len()).filter(|&i| pending(i)).map(|i| calls[i].returned).min().unwrap_or(u64::MAX);
    let mut ok = false;
    for i in 0..calls.len() {
        if !pending(i) || calls[i].invoked > horizon {
            continue;
        }
        let (ret, next) = model.apply(&calls[i].op);
        if ret == calls[i].ret && search(calls, done | (1 << i), &next, seen) {
            ok = true;
            break;
        }
    }
    seen.insert(done, ok);
    ok
}

/// Append-only and per-URL monotonicity over a run's snapshots and final log.
pub fn log_invariants(snaps: &[Vec<LogEntry>], fin: &[LogEntry]) -> Result<(), String> {
    for (i, s) in snaps.iter().enumerate() {
        if s.len() > fin.len() || !check_prefix_consistency(s, fin) {
            return Err(format!("snapshot {i} is not a prefix of the final log"));
        }
    }
    let mut latest: BTreeMap<&str, u32> = BTreeMap::new();
    for (i, e) in fin.iter().enumerate() {
        if e.index != i as u64 {
            return Err(format!("entry {i} has index {}", e.index));
        }
        let v = version_number(&e.manifest_version);
        if let Some(prev) = latest.insert(&e.url, v) {
            if v <= prev {
                return Err(format!("{} went from v{prev} to v{v}", e.url));
            }
        }
    }
    Ok(())
}
