//! The `accjs` command line.
//!
//! Exit status: 0 ok, compliant or all properties hold; 1 a violation was
//! found or a claim proves one; 2 usage or I/O error; 3 a signature,
//! certificate or other verification failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use accjs_core::compliance::{evaluate, generate_manifest, EvalContext, HEADER_LINK, HEADER_MANIFEST};
use accjs_core::crypto::{sign_envelope, verify_envelope, CryptoError, Registry, Role, SignedEnvelope};
use accjs_core::log::{
    capacity_estimate, encode_record, growth_entries, CapacityModel, GrowthScenario, LogEntry, LogError, LogSnapshot,
    LogView, Submission, DEFAULT_FRESHNESS_WINDOW,
};
use accjs_core::manifest::{parse_manifest_with, serialize_manifest_pretty, validate_completeness, ParseOptions};
use accjs_core::measure::{parse_mutation_script, HtmlParser, MeasurementReport, Measurer, MutationEvent, NoFetch, ResourceFetcher};
use accjs_core::sim::properties::{
    accountability, authentication_of_origin, end_to_end_necessity, sufficiency_witness, transparency,
    weak_authentication_of_origin,
};
use accjs_core::sim::{run_scenario, to_ndjson, verify_claim, Claim, ClaimError, ClaimVerdict, PropertyReport, PropertyStatus, Scenario, Variant};
use accjs_core::time::{Timestamp, DAY};
use accjs_core::url::{strip_query, CnMatch};
use accjs_core::compliance::DEFAULT_MAX_DELEGATION_DEPTH;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::ChaCha20Rng;
use rand_core::{OsRng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use crate::casestudy::CaseStudies;
use crate::fixtures::FixtureDir;
use crate::html::Html5everParser;
use crate::keystore::{read_registry, KeyStore, REGISTRY_FILE};
use crate::store::{read_log_file, SharedLog};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "accjs", version, about = "Manifests, signing, transparency log and verification for accountable active content")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Reject unknown manifest fields (default).
    #[arg(long, global = true, overrides_with = "lenient")]
    pub strict: bool,
    /// Accept unknown manifest fields with a warning.
    #[arg(long, global = true, overrides_with = "strict")]
    pub lenient: bool,
    /// Accept gaps between static sequence numbers.
    #[arg(long, global = true)]
    pub allow_seq_gaps: bool,
    /// Staple freshness window in seconds.
    #[arg(long, global = true, default_value_t = DEFAULT_FRESHNESS_WINDOW)]
    pub freshness_window: u64,
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_DELEGATION_DEPTH)]
    pub max_delegation_depth: usize,
    /// Seed for key generation and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Current time as Unix seconds, instead of the system clock.
    #[arg(long, global = true)]
    pub now: Option<u64>,
    /// Transparency log file.
    #[arg(long, global = true, env = "ACCJS_LOG_PATH", default_value = "accjs.log")]
    pub log: PathBuf,
    /// Key store directory.
    #[arg(long, global = true, env = "ACCJS_KEYS", default_value = "keys")]
    pub keys: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Developer,
    WebServer,
    Client,
    Log,
    Broker,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Developer => Role::Developer,
            RoleArg::WebServer => Role::WebServer,
            RoleArg::Client => Role::Client,
            RoleArg::Log => Role::Log,
            RoleArg::Broker => Role::Broker,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a key pair and certificate and trust the certificate.
    Keygen {
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        cn: String,
        #[arg(long, default_value_t = 90)]
        validity_days: u64,
    },
    /// Measure a page and write the manifest asserting everything on it.
    GenerateManifest {
        html: PathBuf,
        #[arg(long)]
        url: String,
        #[arg(long)]
        mutations: Option<PathBuf>,
        /// Fixture directory used to fetch external scripts and frames.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value = "v0")]
        manifest_version: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sign a manifest with a developer key.
    Sign {
        manifest: PathBuf,
        #[arg(long)]
        key: String,
        /// Envelope lifetime in seconds.
        #[arg(long, default_value_t = 7 * DAY)]
        ttl: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append a signed manifest to the log.
    Publish {
        envelope: PathBuf,
        /// Publisher recorded in the entry; defaults to the signing key's id.
        #[arg(long)]
        developer: Option<String>,
        #[arg(long, default_value = "log")]
        log_key: String,
    },
    /// Show the latest entry for a URL.
    Latest { url: String },
    /// Issue a signed freshness proof for the latest entry of a URL.
    Staple {
        url: String,
        #[arg(long, default_value = "log")]
        log_key: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every entry for a URL.
    History { url: String },
    /// Check a page against its signed manifest.
    VerifyPage {
        html: PathBuf,
        #[arg(long)]
        url: String,
        /// Envelope file; otherwise the envelope is located through the
        /// fixtures and the page's manifest link.
        #[arg(long)]
        envelope: Option<PathBuf>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        mutations: Option<PathBuf>,
        /// Trusted certificates; defaults to the key store's registry.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Publicly verify a client's claim against the log.
    VerifyClaim {
        claim: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Run a protocol scenario and check the trace properties.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated: all, origin, transparency, accountability,
        /// necessity, sufficiency.
        #[arg(long, default_value = "all")]
        check: String,
        /// Write the trace, claims, log and registry here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate how many entries fit in a storage budget.
    LogCapacity {
        /// Storage budget, e.g. `100TB` (decimal units).
        #[arg(long, default_value = "100TB")]
        total: String,
        /// All-in bytes per entry.
        #[arg(long, default_value_t = 730)]
        per_entry: u64,
        #[arg(long, default_value_t = 10_000_000)]
        initial_urls: u64,
        #[arg(long, default_value_t = 8)]
        updates_per_month: u64,
        #[arg(long, default_value_t = 1)]
        growth_percent: u64,
        #[arg(long, default_value_t = 60)]
        months: u64,
    },
    /// Write the case-study fixture tree.
    WriteFixtures { dir: PathBuf },
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Crypto(_) => EXIT_VERIFY,
            Error::Log(LogError::BadEnvelope(_) | LogError::CommonNameMismatch { .. } | LogError::Corrupt(_)) => {
                EXIT_VERIFY
            }
            Error::Log(LogError::NonMonotoneVersion { .. }) => EXIT_VIOLATION,
            _ => EXIT_USAGE,
        };
        fail(code, e.to_string())
    }
}

/// What a command reports: a JSON value and its human rendering.
struct Report {
    code: i32,
    json: Value,
    text: String,
}

impl Report {
    fn new(code: i32, json: Value, text: String) -> Self {
        Self { code, json, text }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let json = cli.global.json;
    match execute(&cli) {
        Ok(r) => {
            let written = if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&r.json).expect("report serializes"))
            } else {
                out.write_all(r.text.as_bytes())
            };
            if written.is_err() {
                return EXIT_USAGE;
            }
            r.code
        }
        Err(f) => {
            if json {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&json!({"error": f.message, "exit": f.code})).expect("serializes"));
            }
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli) -> Result<Report, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Keygen { id, role, cn, validity_days } => keygen(g, id, (*role).into(), cn, *validity_days),
        Command::GenerateManifest { html, url, mutations, fixtures, manifest_version, out } => {
            generate(html, url, mutations.as_deref(), fixtures.as_deref(), manifest_version, out.as_deref())
        }
        Command::Sign { manifest, key, ttl, out } => sign(g, manifest, key, *ttl, out.as_deref()),
        Command::Publish { envelope, developer, log_key } => publish(g, envelope, developer.as_deref(), log_key),
        Command::Latest { url } => latest(g, url),
        Command::Staple { url, log_key, out } => staple(g, url, log_key, out.as_deref()),
        Command::History { url } => history(g, url),
        Command::VerifyPage { html, url, envelope, fixtures, mutations, registry } => {
            verify_page(g, html, url, envelope.as_deref(), fixtures.as_deref(), mutations.as_deref(), registry.as_deref())
        }
        Command::VerifyClaim { claim, registry } => verify_claim_cmd(g, claim, registry.as_deref()),
        Command::Simulate { scenario, check, out } => simulate(g, scenario, check, out.as_deref()),
        Command::LogCapacity { total, per_entry, initial_urls, updates_per_month, growth_percent, months } => {
            let growth = GrowthScenario {
                initial_urls: *initial_urls,
                updates_per_month: *updates_per_month,
                growth_percent_per_update: *growth_percent,
                months: *months,
            };
            log_capacity(total, *per_entry, &growth)
        }
        Command::WriteFixtures { dir } => {
            CaseStudies::build().write(dir)?;
            Ok(Report::new(EXIT_OK, json!({"written": dir}), format!("wrote case-study fixtures to {}\n", dir.display())))
        }
    }
}

fn now(g: &Global) -> Timestamp {
    Timestamp(g.now.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Error::io(path, e).into())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|_| fail(EXIT_USAGE, format!("{}: not UTF-8", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

fn parse_opts(g: &Global) -> ParseOptions {
    ParseOptions { lenient: g.lenient && !g.strict, allow_seq_gaps: g.allow_seq_gaps }
}

fn mutations(path: Option<&Path>) -> Result<Vec<MutationEvent>, Failure> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => parse_mutation_script(&read_text(p)?).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", p.display()))),
    }
}

fn measure(
    html: &[u8],
    html_path: &Path,
    url: &str,
    events: &[MutationEvent],
    fetcher: Option<&dyn ResourceFetcher>,
) -> Result<MeasurementReport, Failure> {
    Measurer::new(&Html5everParser, fetcher)
        .measure(html, url, events)
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", html_path.display())))
}

fn registry(g: &Global, path: Option<&Path>) -> Result<Registry, Failure> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| g.keys.join(REGISTRY_FILE));
    Ok(read_registry(&path)?)
}

/// Deterministic key material per (seed, id), so one seed can key a whole
/// test deployment.
fn seeded_rng(seed: u64, id: &str) -> ChaCha20Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    // FNV-1a over the id.
    let h = id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    bytes[8..16].copy_from_slice(&h.to_le_bytes());
    ChaCha20Rng::from_seed(bytes)
}

fn keygen(g: &Global, id: &str, role: Role, cn: &str, days: u64) -> Result<Report, Failure> {
    let ks = KeyStore::open(&g.keys)?;
    let result = match g.seed {
        Some(seed) => ks.generate(id, role, cn, days * DAY, now(g), &mut seeded_rng(seed, id)),
        None => ks.generate(id, role, cn, days * DAY, now(g), &mut OsRng),
    };
    let cert = result.map_err(|e| match e {
        Error::Crypto(c @ (CryptoError::ValidityTooLong { .. } | CryptoError::EmptyValidity)) => fail(EXIT_USAGE, c.to_string()),
        other => other.into(),
    })?;
    let text = format!(
        "{id}: {} certificate {} for {cn}, valid {} to {}\n",
        cert.role, cert.cert_id, cert.not_before, cert.not_after
    );
    Ok(Report::new(EXIT_OK, json!({"id": id, "certificate": cert}), text))
}

fn generate(
    html_path: &Path,
    url: &str,
    mutations_path: Option<&Path>,
    fixtures: Option<&Path>,
    version: &str,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let html = read(html_path)?;
    let events = mutations(mutations_path)?;
    let dir = fixtures.map(FixtureDir::open).transpose()?;
    let report = measure(&html, html_path, url, &events, dir.as_ref().map(|d| d as &dyn ResourceFetcher))?;
    let mut m = generate_manifest(&report);
    m.manifest_version = version.to_string();
    let mut text = serialize_manifest_pretty(&m);
    text.push('\n');
    let statics = m.static_blocks().count();
    let dynamics = m.contents.len() - statics;
    let summary = json!({
        "url": m.url,
        "manifest_version": m.manifest_version,
        "blocks": m.contents.len(),
        "static": statics,
        "dynamic": dynamics,
        "out": out,
    });
    match out {
        Some(p) => {
            write_file(p, text.as_bytes())?;
            let human = format!("{} blocks ({statics} static, {dynamics} dynamic) written to {}\n", m.contents.len(), p.display());
            Ok(Report::new(EXIT_OK, summary, human))
        }
        None => {
            let mut s = summary;
            s["manifest"] = serde_json::from_str(&text).expect("manifest is JSON");
            Ok(Report::new(EXIT_OK, s, text))
        }
    }
}

fn default_envelope_path(manifest: &Path) -> PathBuf {
    let name = manifest.file_name().and_then(|n| n.to_str()).unwrap_or("manifest");
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let stem = stem.strip_suffix(".manifest").unwrap_or(stem);
    manifest.with_file_name(format!("{stem}.sxg.json"))
}

fn sign(g: &Global, manifest_path: &Path, key: &str, ttl: u64, out: Option<&Path>) -> Result<Report, Failure> {
    let text = read_text(manifest_path)?;
    let parsed = parse_manifest_with(&text, &parse_opts(g))
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", manifest_path.display())))?;
    let (dev, cert) = KeyStore::open(&g.keys)?.principal(key)?;
    let env = sign_envelope(&dev, &cert, &parsed.manifest, now(g), ttl, CnMatch::Exact).map_err(Error::Crypto)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| default_envelope_path(manifest_path));
    write_file(&path, (env.to_json() + "\n").as_bytes())?;
    let notes: Vec<String> = parsed
        .warnings
        .iter()
        .map(ToString::to_string)
        .chain(validate_completeness(&parsed.manifest).iter().map(ToString::to_string))
        .collect();
    let mut human = format!(
        "signed {} {} with {} (valid {} to {}) -> {}\n",
        parsed.manifest.url,
        parsed.manifest.manifest_version,
        cert.cert_id,
        env.date,
        env.expires,
        path.display()
    );
    for n in &notes {
        let _ = writeln!(human, "warning: {n}");
    }
    let json = json!({
        "url": parsed.manifest.url,
        "manifest_version": parsed.manifest.manifest_version,
        "cert_id": cert.cert_id,
        "date": env.date,
        "expires": env.expires,
        "out": path,
        "warnings": notes,
    });
    Ok(Report::new(EXIT_OK, json, human))
}

#[derive(Serialize)]
struct EntrySummary<'a> {
    index: u64,
    url: &'a str,
    manifest_version: &'a str,
    developer_id: &'a str,
    ts: Timestamp,
    manifest_digest: String,
    entry_digest: String,
    log_id: &'a str,
}

fn summary(e: &LogEntry) -> EntrySummary<'_> {
    EntrySummary {
        index: e.index,
        url: &e.url,
        manifest_version: &e.manifest_version,
        developer_id: &e.developer_id,
        ts: e.ts,
        manifest_digest: STANDARD.encode(e.manifest_digest),
        entry_digest: STANDARD.encode(e.entry_digest),
        log_id: &e.log_id,
    }
}

fn entry_line(e: &LogEntry) -> String {
    format!("#{:<4} {} {:<6} ts={} by {}\n", e.index, e.url, e.manifest_version, e.ts, e.developer_id)
}

fn publish(g: &Global, env_path: &Path, developer: Option<&str>, log_key: &str) -> Result<Report, Failure> {
    let env = SignedEnvelope::from_json(&read_text(env_path)?).map_err(Error::Crypto)?;
    let ks = KeyStore::open(&g.keys)?;
    let reg = ks.registry()?;
    let (key, _) = ks.principal(log_key)?;
    let developer_id = match developer {
        Some(d) => d.to_string(),
        None => ks.id_for_cert(&env.cert_id)?.unwrap_or_else(|| env.cert_id.clone()),
    };
    let log = SharedLog::open(key, &g.log)?;
    let entry = log.submit(&Submission { developer_id, envelope: env }, &reg, now(g))?;
    Ok(Report::new(EXIT_OK, json!(summary(&entry)), format!("published {}", entry_line(&entry))))
}

/// The log file as a verified, read-only view.
fn snapshot(g: &Global, reg: &Registry) -> Result<LogSnapshot, Failure> {
    let entries = read_log_file(&g.log)?;
    let Some(first) = entries.first() else {
        return Ok(LogSnapshot::new("", [0; 32], Vec::new()).expect("empty log"));
    };
    let log_id = first.log_id.clone();
    let key = reg.channel_key(&log_id).map_err(|e| fail(EXIT_VERIFY, format!("log {log_id}: {e}")))?;
    LogSnapshot::new(&log_id, key, entries).map_err(|e| fail(EXIT_VERIFY, format!("{}: {e}", g.log.display())))
}

fn latest(g: &Global, url: &str) -> Result<Report, Failure> {
    let snap = snapshot(g, &registry(g, None)?)?;
    let entry = snap
        .log_entries()
        .iter()
        .rev()
        .find(|e| e.url == strip_query(url))
        .ok_or_else(|| fail(EXIT_USAGE, format!("no entry for {url}")))?;
    Ok(Report::new(EXIT_OK, json!(summary(entry)), entry_line(entry)))
}

fn history(g: &Global, url: &str) -> Result<Report, Failure> {
    let snap = snapshot(g, &registry(g, None)?)?;
    let entries: Vec<&LogEntry> = snap.log_entries().iter().filter(|e| e.url == strip_query(url)).collect();
    let text = if entries.is_empty() { format!("no entries for {url}\n") } else { entries.iter().map(|e| entry_line(e)).collect() };
    let json = json!({"url": strip_query(url), "entries": entries.iter().map(|e| summary(e)).collect::<Vec<_>>()});
    Ok(Report::new(EXIT_OK, json, text))
}

fn staple(g: &Global, url: &str, log_key: &str, out: Option<&Path>) -> Result<Report, Failure> {
    let (key, _) = KeyStore::open(&g.keys)?.principal(log_key)?;
    let log = SharedLog::open(key, &g.log)?;
    let proof = log.staple(url, now(g), g.freshness_window).map_err(|e| match e {
        LogError::NotFound(u) => fail(EXIT_USAGE, format!("no entry for {u}")),
        other => Failure::from(Error::Log(other)),
    })?;
    let body = serde_json::to_string_pretty(&proof).expect("staple serializes") + "\n";
    if let Some(p) = out {
        write_file(p, body.as_bytes())?;
    }
    let text = match out {
        Some(p) => format!(
            "staple for {} {} issued at {} (window {}s) -> {}\n",
            proof.url,
            proof.manifest_version,
            proof.issued_at,
            proof.window,
            p.display()
        ),
        None => body,
    };
    Ok(Report::new(EXIT_OK, json!(proof), text))
}

/// Finds the envelope for a page: an explicit file, the inline or linked
/// envelope in the page's response headers, or a manifest link in the page.
fn locate_envelope(
    html: &[u8],
    url: &str,
    explicit: Option<&Path>,
    fixtures: Option<&FixtureDir>,
) -> Result<SignedEnvelope, Failure> {
    if let Some(p) = explicit {
        return Ok(SignedEnvelope::from_json(&read_text(p)?).map_err(Error::Crypto)?);
    }
    let dir = fixtures.ok_or_else(|| fail(EXIT_USAGE, "no --envelope given and no --fixtures to look it up in"))?;
    let mut link = None;
    if let Some(resp) = dir.load(url) {
        if let Some(inline) = resp.header(HEADER_MANIFEST) {
            return Ok(SignedEnvelope::from_header_value(inline).map_err(Error::Crypto)?);
        }
        link = resp.header(HEADER_LINK).map(|s| s.trim().to_string());
    }
    if link.is_none() {
        let elements = Html5everParser.parse(html, url).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
        link = elements
            .iter()
            .find(|e| e.tag == "meta" && e.get("name").is_some_and(|n| n.eq_ignore_ascii_case(HEADER_LINK)))
            .and_then(|e| e.get("content"))
            .map(str::to_string);
    }
    let link = link.ok_or_else(|| fail(EXIT_VERIFY, format!("{url} offers no signed manifest")))?;
    let resp = dir.fetch(&link).ok_or_else(|| fail(EXIT_VERIFY, format!("manifest link {link} not found")))?;
    let text = String::from_utf8(resp.body).map_err(|_| fail(EXIT_VERIFY, format!("{link}: not UTF-8")))?;
    Ok(SignedEnvelope::from_json(&text).map_err(Error::Crypto)?)
}

fn verify_page(
    g: &Global,
    html_path: &Path,
    url: &str,
    envelope: Option<&Path>,
    fixtures: Option<&Path>,
    mutations_path: Option<&Path>,
    registry_path: Option<&Path>,
) -> Result<Report, Failure> {
    let html = read(html_path)?;
    let events = mutations(mutations_path)?;
    let dir = fixtures.map(FixtureDir::open).transpose()?;
    let reg = registry(g, registry_path)?;
    let t = now(g);
    let env = locate_envelope(&html, url, envelope, dir.as_ref())?;
    let verified = verify_envelope(&env, &reg, t, CnMatch::Exact).map_err(Error::Crypto)?;
    if strip_query(&verified.manifest.url) != strip_query(url) {
        return Err(fail(EXIT_VERIFY, format!("signed manifest is for {}, not {url}", verified.manifest.url)));
    }
    let fetcher: &dyn ResourceFetcher = match &dir {
        Some(d) => d,
        None => &NoFetch,
    };
    let report = measure(&html, html_path, url, &events, Some(fetcher))?;
    let mut ctx = EvalContext::new(fetcher, &reg, t);
    ctx.parser = Some(&Html5everParser);
    ctx.max_delegation_depth = g.max_delegation_depth;
    let verdict = evaluate(&report, &verified.manifest, &ctx).map_err(|e| fail(EXIT_VERIFY, e.to_string()))?;

    let mut text = format!(
        "{} {} signed by {} ({}): {}\n",
        verified.manifest.url,
        verified.manifest.manifest_version,
        verified.signer_common_name,
        verified.cert_id,
        if verdict.ok { "compliant" } else { "VIOLATION" }
    );
    let chain: Vec<String> = verdict.delegation_chain.iter().map(|l| format!("{} {}", l.url, l.manifest_version)).collect();
    let _ = writeln!(text, "chain: {}", chain.join(" -> "));
    for v in &verdict.violations {
        let _ = writeln!(text, "  {:<22} {:<16} {}", v.code.to_string(), v.location, v.detail);
    }
    for w in &verdict.warnings {
        let _ = writeln!(text, "  warning: {w}");
    }
    let json = json!({
        "url": strip_query(url),
        "manifest_version": verified.manifest.manifest_version,
        "signer": verified.signer_common_name,
        "cert_id": verified.cert_id,
        "elements": report.elements.len(),
        "verdict": verdict,
    });
    Ok(Report::new(if verdict.ok { EXIT_OK } else { EXIT_VIOLATION }, json, text))
}

fn verify_claim_cmd(g: &Global, claim_path: &Path, registry_path: Option<&Path>) -> Result<Report, Failure> {
    let claim: Claim = serde_json::from_str(&read_text(claim_path)?)
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", claim_path.display())))?;
    let reg = registry(g, registry_path)?;
    let snap = snapshot(g, &reg)?;
    match verify_claim(&claim, &snap, &reg, &Html5everParser) {
        Ok(check) => {
            let proven = check.verdict == ClaimVerdict::ProvenViolation;
            let mut text = format!(
                "{} served {} (entry ts {}): {}\n",
                check.server_cert,
                check.url,
                check.ts,
                if proven { "PROVEN VIOLATION" } else { "consistent delivery" }
            );
            for v in &check.violations {
                let _ = writeln!(text, "  {:<22} {:<16} {}", v.code.to_string(), v.location, v.detail);
            }
            Ok(Report::new(if proven { EXIT_VIOLATION } else { EXIT_OK }, json!(check), text))
        }
        Err(e) => Err(fail(EXIT_VERIFY, claim_error(&e))),
    }
}

fn claim_error(e: &ClaimError) -> String {
    format!("claim rejected: {e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Check {
    Origin,
    Transparency,
    Accountability,
    Necessity,
    Sufficiency,
}

fn parse_checks(spec: &str) -> Result<Vec<Check>, Failure> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let add: &[Check] = match part {
            "all" => &[Check::Origin, Check::Transparency, Check::Accountability, Check::Necessity, Check::Sufficiency],
            "origin" => &[Check::Origin],
            "transparency" => &[Check::Transparency],
            "accountability" => &[Check::Accountability],
            "necessity" => &[Check::Necessity],
            "sufficiency" => &[Check::Sufficiency],
            other => return Err(fail(EXIT_USAGE, format!("unknown check `{other}`"))),
        };
        for c in add {
            if !out.contains(c) {
                out.push(*c);
            }
        }
    }
    Ok(out)
}

fn simulate(g: &Global, path: &Path, checks: &str, out: Option<&Path>) -> Result<Report, Failure> {
    let checks = parse_checks(checks)?;
    let mut scenario =
        Scenario::from_json(&read_text(path)?).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    if let Some(seed) = g.seed {
        scenario.seed = seed;
    }
    let outcome = run_scenario(&scenario, &Html5everParser).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
    let trace = &outcome.trace;
    let mut reports = Vec::new();
    let mut witness = None;
    for c in &checks {
        let r = match c {
            Check::Origin if outcome.variant == Variant::CodeVerify => {
                // Hash publication only offers the weakened guarantee; the
                // strict one is reported alongside it.
                reports.push(PropertyReport { name: "authentication-of-origin-strict", status: authentication_of_origin(trace) });
                PropertyReport { name: "authentication-of-origin", status: weak_authentication_of_origin(trace) }
            }
            Check::Origin => PropertyReport { name: "authentication-of-origin", status: authentication_of_origin(trace) },
            Check::Transparency => PropertyReport { name: "transparency", status: transparency(trace, outcome.variant) },
            Check::Accountability => {
                PropertyReport { name: "accountability", status: accountability(trace, outcome.variant) }
            }
            Check::Necessity => PropertyReport { name: "end-to-end-necessity", status: end_to_end_necessity(trace) },
            Check::Sufficiency => {
                witness = Some(sufficiency_witness(trace));
                continue;
            }
        };
        reports.push(r);
    }
    let violated = reports
        .iter()
        .any(|r| r.name != "authentication-of-origin-strict" && matches!(r.status, PropertyStatus::Violated { .. }));

    if let Some(dir) = out {
        fs::create_dir_all(dir.join("claims")).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("trace.ndjson"), to_ndjson(trace).as_bytes())?;
        for (i, c) in outcome.claims.iter().enumerate() {
            let body = serde_json::to_string_pretty(c).expect("claim serializes") + "\n";
            write_file(&dir.join("claims").join(format!("claim-{i}.json")), body.as_bytes())?;
        }
        let records: Vec<u8> = outcome.log.entries().iter().flat_map(encode_record).collect();
        write_file(&dir.join("log.bin"), &records)?;
        let reg = serde_json::to_string_pretty(&outcome.registry).expect("registry serializes") + "\n";
        write_file(&dir.join(REGISTRY_FILE), reg.as_bytes())?;
    }

    let mut text = format!(
        "{} ({}, seed {}): {} events, {} sessions, {} claims\n",
        if scenario.name.is_empty() { "scenario" } else { &scenario.name },
        variant_name(outcome.variant),
        scenario.seed,
        trace.len(),
        outcome.sessions.len(),
        outcome.claims.len()
    );
    for r in &reports {
        let status = match &r.status {
            PropertyStatus::Holds => "holds".to_string(),
            PropertyStatus::Violated { index, reason } => format!("VIOLATED at event {index}: {reason}"),
            PropertyStatus::NotApplicable { reason } => format!("not applicable ({reason})"),
        };
        let _ = writeln!(text, "  {:<34} {status}", r.name);
    }
    if let Some(w) = witness {
        let _ = writeln!(text, "  {:<34} {}", "sufficiency-witness", if w { "present" } else { "absent" });
    }
    let json = json!({
        "scenario": scenario.name,
        "variant": outcome.variant,
        "seed": scenario.seed,
        "events": trace.len(),
        "sessions": outcome.sessions,
        "claims": outcome.claims.len(),
        "properties": reports,
        "sufficiency_witness": witness,
    });
    Ok(Report::new(if violated { EXIT_VIOLATION } else { EXIT_OK }, json, text))
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::AccountableJs => "accountable-js",
        Variant::CodeVerify => "code-verify",
    }
}

/// Parses `100TB`, `1.5 GB`, `730` (bytes). Units are decimal.
pub fn parse_size(text: &str) -> Result<u128, String> {
    let t = text.trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let mult: u128 = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 1,
        "KB" => 1_000,
        "MB" => 1_000_000,
        "GB" => 1_000_000_000,
        "TB" => 1_000_000_000_000,
        "PB" => 1_000_000_000_000_000,
        other => return Err(format!("unknown unit `{other}`")),
    };
    let (int, frac) = num.split_once('.').unwrap_or((num, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(format!("`{text}` is not a size"));
    }
    let whole: u128 = if int.is_empty() { 0 } else { int.parse().map_err(|_| format!("`{text}` is not a size"))? };
    let mut value = whole.checked_mul(mult).ok_or("size too large")?;
    let mut scale = mult;
    for d in frac.chars() {
        let d = d.to_digit(10).ok_or_else(|| format!("`{text}` is not a size"))? as u128;
        scale /= 10;
        value += d * scale;
    }
    Ok(value)
}

fn log_capacity(total: &str, per_entry: u64, growth: &GrowthScenario) -> Result<Report, Failure> {
    let total_bytes = parse_size(total).map_err(|e| fail(EXIT_USAGE, e))?;
    if per_entry == 0 {
        return Err(fail(EXIT_USAGE, "--per-entry must be positive"));
    }
    let model = CapacityModel::with_per_entry(total_bytes, per_entry);
    let capacity = capacity_estimate(&model);
    let (entries, urls) = growth_entries(growth);
    let text = format!(
        "capacity: {capacity} entries ({:.3e}) in {total_bytes} bytes at {per_entry} bytes/entry\n\
         growth: {entries} entries ({:.3e}), {urls} URLs after {} months; {} capacity\n",
        capacity as f64,
        entries as f64,
        growth.months,
        if entries < capacity { "within" } else { "exceeds" }
    );
    let json = json!({
        "total_bytes": total_bytes.to_string(),
        "per_entry_bytes": per_entry,
        "capacity": capacity.to_string(),
        "growth": {
            "initial_urls": growth.initial_urls,
            "updates_per_month": growth.updates_per_month,
            "growth_percent_per_update": growth.growth_percent_per_update,
            "months": growth.months,
            "entries": entries.to_string(),
            "urls": urls.to_string(),
            "within_capacity": entries < capacity,
        },
    });
    Ok(Report::new(EXIT_OK, json, text))
}
