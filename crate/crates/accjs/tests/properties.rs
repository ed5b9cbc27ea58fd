mod common;

use accjs::casestudy::{CaseStudies, FIXTURE_TIME, SHOP_URL};
use accjs::Html5everParser;
use accjs_core::compliance::{evaluate, generate_manifest, ComplianceVerdict, EvalContext, ViolationCode};
use accjs_core::crypto::{verify_envelope, Registry};
use accjs_core::manifest::{ElementKind, Manifest, ManifestBlock, SandboxPolicy, SrcType, TrustLevel};
use accjs_core::measure::{Measurer, NoFetch, ResourceFetcher, Response};
use accjs_core::time::DAY;
use accjs_core::url::CnMatch;
use common::{random_page, Rng, SANDBOX_TOKENS};
use proptest::prelude::*;

fn eval(html: &[u8], url: &str, m: &Manifest, site: &dyn ResourceFetcher, reg: &Registry) -> ComplianceVerdict {
    let report = Measurer::new(&Html5everParser, Some(site)).measure(html, url, &[]).unwrap();
    let mut ctx = EvalContext::new(site, reg, FIXTURE_TIME.plus(DAY));
    ctx.parser = Some(&Html5everParser);
    evaluate(&report, m, &ctx).unwrap()
}

#[test]
fn trust_matrix_is_exactly_the_table() {
    use ElementKind::*;
    use TrustLevel::*;
    let allowed = [
        (Inline, Assert),
        (EventHandler, Assert),
        (External, Assert),
        (External, BlindTrust),
        (External, Delegate),
        (Iframe(SrcType::ExternalUrl), Assert),
        (Iframe(SrcType::ExternalUrl), BlindTrust),
        (Iframe(SrcType::ExternalUrl), Delegate),
        (Iframe(SrcType::Srcdoc), Assert),
        (Iframe(SrcType::Script), Assert),
    ];
    for kind in ElementKind::ALL {
        for trust in TrustLevel::ALL {
            assert_eq!(kind.allows_trust(trust), allowed.contains(&(kind, trust)), "{kind} {trust}");
        }
    }
}

#[test]
fn tampered_content_anywhere_in_the_chain_is_caught() {
    let cs = CaseStudies::build();
    let reg = cs.registry();
    let shop = &cs.manifests[SHOP_URL];
    let base = cs.site();
    assert!(eval(cs.html(SHOP_URL), SHOP_URL, shop, &base, &reg).ok);
    let scripts: Vec<String> =
        base.urls().filter(|u| u.contains(".nimiq.com/") && u.ends_with(".js")).map(str::to_string).collect();
    assert_eq!(scripts.len(), 15);
    for url in scripts {
        let mut site = base.clone();
        let mut body = base.get(&url).unwrap().body.clone();
        body[0] ^= 0x20;
        site.insert(&url, Response { headers: Vec::new(), body });
        let v = eval(cs.html(SHOP_URL), SHOP_URL, shop, &site, &reg);
        assert!(!v.ok, "changing {url} went unnoticed");
        assert!(v.violations.iter().any(|x| x.code == ViolationCode::DelegationUnresolvable || x.code == ViolationCode::HashMismatch));
    }
}

#[test]
fn shipped_envelopes_verify() {
    let cs = CaseStudies::build();
    let reg = cs.registry();
    for page in cs.signed_pages() {
        let env = cs.envelope(page, &cs.manifests[page]);
        let v = verify_envelope(&env, &reg, FIXTURE_TIME, CnMatch::Exact).unwrap();
        assert_eq!(v.manifest, cs.manifests[page]);
    }
}

fn tokens(mask: u16) -> Vec<&'static str> {
    SANDBOX_TOKENS.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, t)| *t).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sandbox_flag_iff_not_subset(declared in 0u16..1024, measured in 0u16..1024, declared_absent in any::<bool>()) {
        let url = "https://host.example/";
        let html = format!("<iframe src=\"https://f.example/\" sandbox=\"{}\"></iframe>", tokens(measured).join(" "));
        let mut m = Manifest::new(url, "v1");
        let mut b = ManifestBlock::new(ElementKind::Iframe(SrcType::ExternalUrl), TrustLevel::BlindTrust);
        b.seq = Some(0);
        b.src = Some("https://f.example/".into());
        b.sandbox = if declared_absent { SandboxPolicy::absent() } else { SandboxPolicy::with_tokens(tokens(declared)) };
        m.contents.push(b);
        let v = eval(html.as_bytes(), url, &m, &NoFetch, &Registry::new());
        let flagged = v.violations.iter().any(|x| x.code == ViolationCode::SandboxTooPermissive);
        let subset = declared_absent || measured & !declared == 0;
        prop_assert_eq!(flagged, !subset);
    }

    #[test]
    fn generated_manifest_accepts_its_page(seed in any::<u64>()) {
        let page = random_page(&mut Rng::new(seed));
        let report = Measurer::new(&Html5everParser, Some(&page.site))
            .measure(page.html.as_bytes(), &page.url, &page.events)
            .unwrap();
        let m = generate_manifest(&report);
        let reg = Registry::new();
        let mut ctx = EvalContext::new(&page.site, &reg, FIXTURE_TIME);
        ctx.parser = Some(&Html5everParser);
        let v = evaluate(&report, &m, &ctx).unwrap();
        prop_assert!(v.ok, "{:?}", v.violations);
    }
}
