//! Protocol messages and their symbolic projections.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::claim::Claim;
use super::term::Term;
use crate::crypto::{verify_tuple, Principal, PublicKey, SignedEnvelope};
use crate::encoding::{base64_bytes, encode_tuple};
use crate::log::{LogEntry, StapledProof, Submission};

const REQUEST_LABEL: &str = "accjs/request";
const SIGW_LABEL: &str = "accjs/sigw";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    UpdateToLog,
    LogReceipt,
    StapleToServer,
    ClientRequest,
    ServerResponse,
    ClaimSubmission,
    CodeVerifyHashPublish,
    CodeVerifyHashQuery,
}

/// A client's signed request for a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedRequest {
    pub client_cert: String,
    pub url: String,
    #[serde(with = "base64_bytes")]
    pub nonce: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub sig: Vec<u8>,
}

impl SignedRequest {
    pub fn sign(client: &Principal, url: &str, nonce: &[u8]) -> Self {
        let sig = client.sign_tuple(&[REQUEST_LABEL.as_bytes(), nonce, url.as_bytes()]).to_vec();
        Self { client_cert: client.cert_id.clone(), url: url.into(), nonce: nonce.to_vec(), sig }
    }

    pub fn verify(&self, pk: &PublicKey) -> bool {
        verify_tuple(pk, &self.sig, &[REQUEST_LABEL.as_bytes(), &self.nonce, self.url.as_bytes()])
    }

    pub fn term(&self) -> Term {
        Term::Signed {
            signer: self.client_cert.clone(),
            body: Box::new(Term::tuple(vec![Term::atom(REQUEST_LABEL), Term::atom(&self.nonce), Term::atom(&self.url)])),
            sig: self.sig.clone(),
        }
    }
}

/// The bytes a server signs when answering request `nonce` with `html`.
pub fn sigw_message(url: &str, html: &[u8], nonce: &[u8], staple: &StapledProof) -> Vec<u8> {
    encode_tuple(&[SIGW_LABEL.as_bytes(), url.as_bytes(), html, nonce, &staple.to_bytes()])
}

pub fn sign_response(server: &Principal, url: &str, html: &[u8], nonce: &[u8], staple: &StapledProof) -> Vec<u8> {
    crate::crypto::sign_detached(server, &sigw_message(url, html, nonce, staple)).to_vec()
}

pub fn verify_response_sig(pk: &PublicKey, sig: &[u8], url: &str, html: &[u8], nonce: &[u8], staple: &StapledProof) -> bool {
    crate::crypto::verify_detached(pk, sig, &sigw_message(url, html, nonce, staple))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerResponse {
    pub server_cert: String,
    pub url: String,
    #[serde(with = "base64_bytes")]
    pub nonce: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub html: Vec<u8>,
    pub envelope: Option<SignedEnvelope>,
    pub staple: Option<StapledProof>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_b64")]
    pub sig_w: Option<Vec<u8>>,
}

pub(crate) mod opt_b64 {
    use alloc::vec::Vec;
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&STANDARD.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let v: Option<alloc::string::String> = Option::deserialize(d)?;
        v.map(|t| STANDARD.decode(t).map_err(serde::de::Error::custom)).transpose()
    }
}

pub fn envelope_term(env: &SignedEnvelope) -> Term {
    Term::Signed { signer: env.cert_id.clone(), body: Box::new(Term::Atom(env.signed_bytes())), sig: env.signature.clone() }
}

pub fn staple_term(s: &StapledProof) -> Term {
    Term::Signed { signer: s.log_id.clone(), body: Box::new(Term::Atom(s.signed_bytes())), sig: s.sig.clone() }
}

fn entry_term(e: &LogEntry) -> Term {
    Term::tuple(vec![
        Term::Signed { signer: e.log_id.clone(), body: Box::new(Term::Atom(e.signed_fields())), sig: e.sig_l.clone() },
        envelope_term(&e.envelope),
        Term::atom(&e.developer_id),
    ])
}

fn opt<T>(v: Option<&T>, f: impl Fn(&T) -> Term) -> Term {
    v.map(f).unwrap_or_else(|| Term::atom(""))
}

impl ServerResponse {
    pub fn term(&self) -> Term {
        let sig = match (&self.sig_w, &self.staple) {
            (Some(sig), Some(staple)) => Term::Signed {
                signer: self.server_cert.clone(),
                body: Box::new(Term::tuple(vec![
                    Term::atom(SIGW_LABEL),
                    Term::atom(&self.url),
                    Term::atom(&self.html),
                    Term::atom(&self.nonce),
                    staple_term(staple),
                ])),
                sig: sig.clone(),
            },
            // Cannot verify without the staple it should cover.
            (Some(sig), None) => Term::Signed { signer: self.server_cert.clone(), body: Box::new(Term::atom("")), sig: sig.clone() },
            (None, _) => Term::atom(""),
        };
        Term::tuple(vec![
            Term::atom("response"),
            Term::atom(&self.server_cert),
            Term::atom(&self.url),
            Term::atom(&self.nonce),
            Term::atom(&self.html),
            opt(self.envelope.as_ref(), envelope_term),
            opt(self.staple.as_ref(), staple_term),
            sig,
        ])
    }
}

/// What a broker stores per URL in the hash-publication variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashRecord {
    pub version: u64,
    #[serde(with = "base64_bytes")]
    pub hash: [u8; 32],
    pub publisher: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    UpdateToLog(Submission),
    LogReceipt { entry: LogEntry, staple: StapledProof },
    /// Developer to server: the page and the material to serve with it.
    Deploy { url: String, html: Vec<u8>, envelope: Option<SignedEnvelope>, staple: Option<StapledProof> },
    /// Log to server: a fresh statement about the latest entry.
    StapleRefresh(StapledProof),
    ClientRequest(SignedRequest),
    ServerResponse(ServerResponse),
    ClaimSubmission(Claim),
    HashPublish { url: String, record: HashRecord },
    HashQuery { url: String, nonce: Vec<u8>, answer: Option<HashRecord> },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::UpdateToLog(_) => MessageKind::UpdateToLog,
            Payload::LogReceipt { .. } => MessageKind::LogReceipt,
            Payload::Deploy { .. } | Payload::StapleRefresh(_) => MessageKind::StapleToServer,
            Payload::ClientRequest(_) => MessageKind::ClientRequest,
            Payload::ServerResponse(_) => MessageKind::ServerResponse,
            Payload::ClaimSubmission(_) => MessageKind::ClaimSubmission,
            Payload::HashPublish { .. } => MessageKind::CodeVerifyHashPublish,
            Payload::HashQuery { .. } => MessageKind::CodeVerifyHashQuery,
        }
    }

    /// Messages on authenticated, confidential channels: the adversary does
    /// not see them and can only send them as a corrupted sender.
    pub fn private_channel(&self) -> bool {
        matches!(self, Payload::Deploy { .. } | Payload::HashPublish { .. } | Payload::HashQuery { .. })
    }

    pub fn term(&self) -> Term {
        match self {
            Payload::UpdateToLog(s) => Term::tuple(vec![Term::atom("update"), Term::atom(&s.developer_id), envelope_term(&s.envelope)]),
            Payload::LogReceipt { entry, staple } => Term::tuple(vec![Term::atom("receipt"), entry_term(entry), staple_term(staple)]),
            Payload::Deploy { url, html, envelope, staple } => Term::tuple(vec![
                Term::atom("deploy"),
                Term::atom(url),
                Term::atom(html),
                opt(envelope.as_ref(), envelope_term),
                opt(staple.as_ref(), staple_term),
            ]),
            Payload::StapleRefresh(s) => Term::tuple(vec![Term::atom("refresh"), staple_term(s)]),
            Payload::ClientRequest(r) => r.term(),
            Payload::ServerResponse(r) => r.term(),
            Payload::ClaimSubmission(c) => c.term(),
            Payload::HashPublish { url, record } => {
                Term::tuple(vec![Term::atom("hash-publish"), Term::atom(url), Term::atom(record.hash)])
            }
            Payload::HashQuery { url, nonce, answer } => Term::tuple(vec![
                Term::atom("hash-query"),
                Term::atom(url),
                Term::atom(nonce),
                opt(answer.as_ref(), |a| Term::atom(a.hash)),
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub id: u64,
    pub sender: String,
    pub receiver: String,
    pub payload: Payload,
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{test_principal, Role};
    use crate::log::tests::{fixture, submission};
    use crate::sim::term::Knowledge;
    use crate::time::Timestamp;
    use alloc::collections::BTreeMap;

    #[test]
    fn response_signature_term_is_genuine() {
        let mut f = fixture();
        let entry = f.log.submit(&submission(&f, "http://www.helloworld.com/", "v1", 10), &f.registry, Timestamp(10)).unwrap();
        let staple = f.log.staple(&entry.url, Timestamp(11), 100).unwrap();
        let (w, _) = test_principal("w", Role::WebServer, "helloworld.com", 9);
        let sig = sign_response(&w, &entry.url, b"<html>", b"n1", &staple);
        assert!(verify_response_sig(&w.public_key(), &sig, &entry.url, b"<html>", b"n1", &staple));
        assert!(!verify_response_sig(&w.public_key(), &sig, &entry.url, b"<html>", b"n2", &staple));

        let resp = ServerResponse {
            server_cert: w.cert_id.clone(),
            url: entry.url.clone(),
            nonce: b"n1".to_vec(),
            html: b"<html>".to_vec(),
            envelope: Some(entry.envelope.clone()),
            staple: Some(staple.clone()),
            sig_w: Some(sig),
        };
        let mut keys = BTreeMap::new();
        keys.insert(w.cert_id.clone(), w.public_key());
        keys.insert(f.log.cert_id().into(), f.log.public_key());
        let mut k = Knowledge::new(keys);
        // Everything but the server signature is known: still not derivable.
        k.observe(&Term::atom(&resp.html));
        k.observe(&Term::atom(&resp.nonce));
        k.observe(&Term::atom(&resp.url));
        k.observe(&Term::atom(&resp.server_cert));
        k.observe(&Term::atom("response"));
        k.observe(&Term::atom(SIGW_LABEL));
        k.observe(&envelope_term(&entry.envelope));
        k.observe(&staple_term(&staple));
        assert!(!k.derivable(&resp.term(), 4));
        k.leak_key(&w.cert_id);
        assert!(k.derivable(&resp.term(), 4));
    }

    #[test]
    fn request_round_trip() {
        let (c, _) = test_principal("c", Role::Client, "c", 3);
        let r = SignedRequest::sign(&c, "http://a.com/", b"nonce");
        assert!(r.verify(&c.public_key()));
        let mut bad = r.clone();
        bad.nonce[0] ^= 1;
        assert!(!bad.verify(&c.public_key()));
    }
}
