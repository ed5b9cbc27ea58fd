//! Keys, certificates and signatures.
//!
//! The registry stands in for a PKI: it maps certificate ids to a subject
//! common name, a public key, a validity window and a usage flag. Manifest
//! envelopes may only be signed with exchange-signing certificates and
//! channel messages only with the others.

mod envelope;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{base64_bytes, encode_tuple};
use crate::time::{Timestamp, DAY};

pub use envelope::{sign_envelope, verify_envelope, SignedEnvelope, VerifiedManifest, MANIFEST_CONTENT_TYPE};

/// Longest validity allowed for an exchange-signing certificate.
pub const MAX_EXCHANGE_CERT_VALIDITY: u64 = 90 * DAY;

pub type PublicKey = [u8; 32];
pub type SignatureBytes = [u8; 64];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("certificate validity of {requested}s exceeds the {max}s limit for exchange signing")]
    ValidityTooLong { requested: u64, max: u64 },
    #[error("validity window must be non-empty")]
    EmptyValidity,
    #[error("common name `{common_name}` does not cover `{url}`")]
    CommonNameMismatch { common_name: String, url: String },
    #[error("signing certificate is not valid at this time")]
    ExpiredCert,
    #[error("envelope is outside its validity window")]
    Expired,
    #[error("signature does not verify")]
    BadSignature,
    #[error("certificate used for the wrong purpose")]
    WrongCertUsage,
    #[error("unknown certificate `{0}`")]
    UnknownCertificate(String),
    #[error("manifest url `{manifest}` does not match request url `{request}`")]
    UrlMismatch { manifest: String, request: String },
    #[error("envelope body is not a valid manifest: {0}")]
    BadManifest(String),
    #[error("malformed envelope: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Developer,
    WebServer,
    Client,
    Log,
    Broker,
}

impl Role {
    /// Developers sign manifests; every other role signs channel messages.
    pub fn signs_exchanges(self) -> bool {
        self == Role::Developer
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Developer => "developer",
            Role::WebServer => "web-server",
            Role::Client => "client",
            Role::Log => "log",
            Role::Broker => "broker",
        })
    }
}

/// A protocol participant holding a signing key.
#[derive(Clone)]
pub struct Principal {
    pub id: String,
    pub role: Role,
    pub common_name: String,
    pub cert_id: String,
    key: SigningKey,
    pub corrupted: bool,
}

impl fmt::Debug for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Principal")
            .field("id", &self.id)
            .field("role", &self.role)
            .field("common_name", &self.common_name)
            .field("cert_id", &self.cert_id)
            .field("corrupted", &self.corrupted)
            .finish_non_exhaustive()
    }
}

impl Principal {
    pub fn from_secret(id: &str, role: Role, common_name: &str, secret: [u8; 32]) -> Self {
        let key = SigningKey::from_bytes(&secret);
        let cert_id = cert_id_for(&key.verifying_key().to_bytes());
        Self { id: id.into(), role, common_name: common_name.into(), cert_id, key, corrupted: false }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.verifying_key().to_bytes()
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    /// Signature over the tuple encoding of `fields`.
    pub fn sign_tuple<F: AsRef<[u8]>>(&self, fields: &[F]) -> SignatureBytes {
        self.sign_raw(&encode_tuple(fields))
    }

    pub(crate) fn sign_raw(&self, msg: &[u8]) -> SignatureBytes {
        self.key.sign(msg).to_bytes()
    }
}

fn cert_id_for(pk: &PublicKey) -> String {
    let digest = Sha256::digest(pk);
    let mut id = String::from("cert-");
    for b in &digest[..8] {
        id.push_str(&alloc::format!("{b:02x}"));
    }
    id
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertRecord {
    pub cert_id: String,
    pub subject_common_name: String,
    pub role: Role,
    #[serde(with = "base64_bytes")]
    pub public_key: PublicKey,
    pub can_sign_exchanges: bool,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
}

impl CertRecord {
    pub fn valid_at(&self, t: Timestamp) -> bool {
        self.not_before <= t && t <= self.not_after
    }
}

/// Creates a principal with a fresh key and its certificate, valid for
/// `validity` seconds from `now`.
pub fn keygen<R: RngCore + CryptoRng>(
    id: &str,
    role: Role,
    common_name: &str,
    validity: u64,
    now: Timestamp,
    rng: &mut R,
) -> Result<(Principal, CertRecord), CryptoError> {
    if validity == 0 {
        return Err(CryptoError::EmptyValidity);
    }
    if role.signs_exchanges() && validity > MAX_EXCHANGE_CERT_VALIDITY {
        return Err(CryptoError::ValidityTooLong { requested: validity, max: MAX_EXCHANGE_CERT_VALIDITY });
    }
    let mut secret = [0u8; 32];
    rng.fill_bytes(&mut secret);
    let principal = Principal::from_secret(id, role, common_name, secret);
    let cert = CertRecord {
        cert_id: principal.cert_id.clone(),
        subject_common_name: common_name.to_string(),
        role,
        public_key: principal.public_key(),
        can_sign_exchanges: role.signs_exchanges(),
        not_before: now,
        not_after: now.plus(validity),
    };
    Ok((principal, cert))
}

pub fn verify_tuple<F: AsRef<[u8]>>(pk: &PublicKey, sig: &[u8], fields: &[F]) -> bool {
    verify_raw(pk, sig, &encode_tuple(fields))
}

pub(crate) fn verify_raw(pk: &PublicKey, sig: &[u8], msg: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(pk) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(sig) else {
        return false;
    };
    key.verify_strict(msg, &sig).is_ok()
}

/// Detached signature by `p` over `message`.
pub fn sign_detached(p: &Principal, message: &[u8]) -> SignatureBytes {
    p.sign_raw(message)
}

pub fn verify_detached(pk: &PublicKey, sig: &[u8], message: &[u8]) -> bool {
    verify_raw(pk, sig, message)
}

/// Root of trust: every certificate a verifier accepts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    certs: BTreeMap<String, CertRecord>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cert: CertRecord) {
        self.certs.insert(cert.cert_id.clone(), cert);
    }

    pub fn get(&self, cert_id: &str) -> Option<&CertRecord> {
        self.certs.get(cert_id)
    }

    pub fn certs(&self) -> impl Iterator<Item = &CertRecord> {
        self.certs.values()
    }

    /// Certificate usable for signing manifests.
    pub fn exchange_cert(&self, cert_id: &str) -> Result<&CertRecord, CryptoError> {
        let cert = self.get(cert_id).ok_or_else(|| CryptoError::UnknownCertificate(cert_id.into()))?;
        if !cert.can_sign_exchanges {
            return Err(CryptoError::WrongCertUsage);
        }
        Ok(cert)
    }

    /// Key for verifying channel messages (requests, responses, log
    /// statements). Exchange-signing certificates are refused.
    pub fn channel_key(&self, cert_id: &str) -> Result<PublicKey, CryptoError> {
        let cert = self.get(cert_id).ok_or_else(|| CryptoError::UnknownCertificate(cert_id.into()))?;
        if cert.can_sign_exchanges {
            return Err(CryptoError::WrongCertUsage);
        }
        Ok(cert.public_key)
    }
}

/// Convenience for tests and the simulator: keygen that cannot fail.
pub fn test_principal(id: &str, role: Role, common_name: &str, seed: u64) -> (Principal, CertRecord) {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    keygen(id, role, common_name, MAX_EXCHANGE_CERT_VALIDITY, Timestamp(0), &mut rng).expect("valid parameters")
}
