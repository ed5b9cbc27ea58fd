//! Signed manifest envelopes.
//!
//! An envelope binds a manifest body to the URL it was requested for, a set
//! of response headers and a validity window, under a developer's
//! exchange-signing certificate. On disk it is JSON with base64 binary fields
//! (`.sxg.json`); inline in a response it travels base64-encoded in the
//! `x-acc-js-man` header.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{verify_raw, CertRecord, CryptoError, Principal, Registry};
use crate::encoding::{base64_bytes, encode_tuple};
use crate::manifest::{parse_manifest, serialize_manifest, Manifest};
use crate::time::Timestamp;
use crate::url::{common_name_matches, strip_query, CnMatch};

pub const MANIFEST_CONTENT_TYPE: &str = "application/manifest+json";
const LABEL: &str = "accjs/envelope/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedEnvelope {
    pub request_url: String,
    pub response_headers: Vec<(String, String)>,
    #[serde(with = "base64_bytes")]
    pub body: Vec<u8>,
    pub date: Timestamp,
    pub expires: Timestamp,
    pub cert_id: String,
    pub cert_url: String,
    #[serde(with = "base64_bytes")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedManifest {
    pub manifest: Manifest,
    pub signer_common_name: String,
    pub cert_id: String,
}

impl SignedEnvelope {
    /// The exact bytes covered by `signature`.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let headers: Vec<&[u8]> =
            self.response_headers.iter().flat_map(|(k, v)| [k.as_bytes(), v.as_bytes()]).collect();
        encode_tuple(&[
            LABEL.as_bytes(),
            self.request_url.as_bytes(),
            &encode_tuple(&headers),
            &self.body,
            &self.date.to_be_bytes(),
            &self.expires.to_be_bytes(),
            self.cert_id.as_bytes(),
            self.cert_url.as_bytes(),
        ])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, CryptoError> {
        serde_json::from_str(text).map_err(|e| CryptoError::Malformed(e.to_string()))
    }

    /// Value for the `x-acc-js-man` response header.
    pub fn to_header_value(&self) -> String {
        STANDARD.encode(serde_json::to_vec(self).expect("envelope serialization cannot fail"))
    }

    pub fn from_header_value(value: &str) -> Result<Self, CryptoError> {
        let raw = STANDARD.decode(value.trim()).map_err(|e| CryptoError::Malformed(e.to_string()))?;
        serde_json::from_slice(&raw).map_err(|e| CryptoError::Malformed(e.to_string()))
    }
}

/// Signs `manifest` for delivery at its own URL, valid for `ttl` seconds.
pub fn sign_envelope(
    dev: &Principal,
    cert: &CertRecord,
    manifest: &Manifest,
    now: Timestamp,
    ttl: u64,
    cn_mode: CnMatch,
) -> Result<SignedEnvelope, CryptoError> {
    if !cert.can_sign_exchanges || cert.public_key != dev.public_key() {
        return Err(CryptoError::WrongCertUsage);
    }
    if !common_name_matches(&cert.subject_common_name, &manifest.url, cn_mode) {
        return Err(CryptoError::CommonNameMismatch {
            common_name: cert.subject_common_name.clone(),
            url: manifest.url.clone(),
        });
    }
    if !cert.valid_at(now) {
        return Err(CryptoError::ExpiredCert);
    }
    if ttl == 0 {
        return Err(CryptoError::EmptyValidity);
    }
    let mut env = SignedEnvelope {
        request_url: manifest.url.clone(),
        response_headers: alloc::vec![("content-type".into(), MANIFEST_CONTENT_TYPE.into())],
        body: serialize_manifest(manifest),
        date: now,
        expires: now.plus(ttl),
        cert_id: cert.cert_id.clone(),
        cert_url: format!("https://{}/.well-known/accjs/{}.cert", cert.subject_common_name, cert.cert_id),
        signature: Vec::new(),
    };
    env.signature = dev.sign_raw(&env.signed_bytes()).to_vec();
    Ok(env)
}

pub fn verify_envelope(
    env: &SignedEnvelope,
    registry: &Registry,
    now: Timestamp,
    cn_mode: CnMatch,
) -> Result<VerifiedManifest, CryptoError> {
    let cert = registry.exchange_cert(&env.cert_id)?;
    if !verify_raw(&cert.public_key, &env.signature, &env.signed_bytes()) {
        return Err(CryptoError::BadSignature);
    }
    if env.expires <= env.date || now < env.date || now > env.expires {
        return Err(CryptoError::Expired);
    }
    if !cert.valid_at(env.date) {
        return Err(CryptoError::ExpiredCert);
    }
    let text = core::str::from_utf8(&env.body).map_err(|e| CryptoError::BadManifest(e.to_string()))?;
    let manifest = parse_manifest(text).map_err(|e| CryptoError::BadManifest(e.to_string()))?;
    let request = strip_query(&env.request_url);
    if manifest.url != request {
        return Err(CryptoError::UrlMismatch { manifest: manifest.url, request: request.into() });
    }
    if !common_name_matches(&cert.subject_common_name, request, cn_mode) {
        return Err(CryptoError::CommonNameMismatch {
            common_name: cert.subject_common_name.clone(),
            url: request.into(),
        });
    }
    Ok(VerifiedManifest { manifest, signer_common_name: cert.subject_common_name.clone(), cert_id: cert.cert_id.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{test_principal, Role};
    use crate::time::DAY;
    use proptest::prelude::*;

    const HELLO: &str = r#"{"url":"http://www.helloworld.com/","manifest_version":"v0","contents":[{"seq":0,"type":"inline","load":"sync","trust":"assert","hash":"sha256-AfuyZ600rkX8AD+xANHUProHJm+22Tp0bMnvPFk/vas="}]}"#;

    fn setup(cn: &str) -> (Principal, CertRecord, Registry) {
        let (dev, cert) = test_principal("dev", Role::Developer, cn, 11);
        let mut reg = Registry::new();
        reg.insert(cert.clone());
        (dev, cert, reg)
    }

    #[test]
    fn sign_verify_roundtrip() {
        let (dev, cert, reg) = setup("helloworld.com");
        let m = parse_manifest(HELLO).unwrap();
        let env = sign_envelope(&dev, &cert, &m, Timestamp(100), DAY, CnMatch::Exact).unwrap();
        let v = verify_envelope(&env, &reg, Timestamp(200), CnMatch::Exact).unwrap();
        assert_eq!(v.manifest, m);
        assert_eq!(v.signer_common_name, "helloworld.com");
        let back = SignedEnvelope::from_json(&env.to_json()).unwrap();
        assert_eq!(back, env);
        assert_eq!(SignedEnvelope::from_header_value(&env.to_header_value()).unwrap(), env);
    }

    #[test]
    fn wrong_common_name() {
        let (dev, cert, _) = setup("evil.com");
        let m = parse_manifest(HELLO).unwrap();
        assert!(matches!(
            sign_envelope(&dev, &cert, &m, Timestamp(0), DAY, CnMatch::Exact),
            Err(CryptoError::CommonNameMismatch { .. })
        ));
    }

    #[test]
    fn validity_window_is_exact() {
        let (dev, cert, reg) = setup("helloworld.com");
        let m = parse_manifest(HELLO).unwrap();
        let env = sign_envelope(&dev, &cert, &m, Timestamp(1000), 500, CnMatch::Exact).unwrap();
        assert!(verify_envelope(&env, &reg, Timestamp(1000), CnMatch::Exact).is_ok());
        assert!(verify_envelope(&env, &reg, Timestamp(1500), CnMatch::Exact).is_ok());
        assert_eq!(verify_envelope(&env, &reg, Timestamp(1501), CnMatch::Exact), Err(CryptoError::Expired));
        assert_eq!(verify_envelope(&env, &reg, Timestamp(999), CnMatch::Exact), Err(CryptoError::Expired));
    }

    #[test]
    fn channel_cert_cannot_sign_exchanges() {
        let (web, wcert) = test_principal("web", Role::WebServer, "helloworld.com", 12);
        let m = parse_manifest(HELLO).unwrap();
        assert_eq!(sign_envelope(&web, &wcert, &m, Timestamp(0), DAY, CnMatch::Exact), Err(CryptoError::WrongCertUsage));

        // A forged envelope naming a channel certificate is refused before the
        // signature is even looked at.
        let (dev, cert, _) = setup("helloworld.com");
        let mut env = sign_envelope(&dev, &cert, &m, Timestamp(0), DAY, CnMatch::Exact).unwrap();
        env.cert_id = wcert.cert_id.clone();
        env.signature = web.sign_raw(&env.signed_bytes()).to_vec();
        let mut reg = Registry::new();
        reg.insert(wcert);
        assert_eq!(verify_envelope(&env, &reg, Timestamp(1), CnMatch::Exact), Err(CryptoError::WrongCertUsage));
    }

    #[test]
    fn url_must_match() {
        let (dev, cert, reg) = setup("helloworld.com");
        let m = parse_manifest(HELLO).unwrap();
        let mut env = sign_envelope(&dev, &cert, &m, Timestamp(0), DAY, CnMatch::Exact).unwrap();
        env.request_url = "http://www.helloworld.com/other".into();
        env.signature = dev.sign_raw(&env.signed_bytes()).to_vec();
        assert!(matches!(verify_envelope(&env, &reg, Timestamp(1), CnMatch::Exact), Err(CryptoError::UrlMismatch { .. })));
        env.request_url = "http://www.helloworld.com/?utm=1".into();
        env.signature = dev.sign_raw(&env.signed_bytes()).to_vec();
        assert!(verify_envelope(&env, &reg, Timestamp(1), CnMatch::Exact).is_ok());
    }

    #[test]
    fn body_bit_flip_is_detected() {
        let (dev, cert, reg) = setup("helloworld.com");
        let m = parse_manifest(HELLO).unwrap();
        let mut env = sign_envelope(&dev, &cert, &m, Timestamp(0), DAY, CnMatch::Exact).unwrap();
        env.body[10] ^= 1;
        assert_eq!(verify_envelope(&env, &reg, Timestamp(1), CnMatch::Exact), Err(CryptoError::BadSignature));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn valid_exactly_inside_window(date in 0u64..1_000_000, ttl in 1u64..100_000, probe in 0u64..1_200_000) {
            let (dev, cert, reg) = setup("helloworld.com");
            let m = parse_manifest(HELLO).unwrap();
            let env = sign_envelope(&dev, &cert, &m, Timestamp(date), ttl, CnMatch::Exact).unwrap();
            let ok = verify_envelope(&env, &reg, Timestamp(probe), CnMatch::Exact).is_ok();
            prop_assert_eq!(ok, probe >= date && probe <= date + ttl);
        }
    }
}
