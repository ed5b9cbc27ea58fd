//! Symbolic view of messages and the adversary's knowledge.
//!
//! Every wire message projects onto a [`Term`]. The encoding of a term is
//! chosen so that a signed term's body encodes to exactly the bytes the
//! protocol signs; a signature is therefore "valid" in the symbolic sense iff
//! it verifies for real.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::crypto::{verify_raw, PublicKey};
use crate::encoding::encode_tuple;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Atom(Vec<u8>),
    Tuple(Vec<Term>),
    Signed { signer: String, body: Box<Term>, sig: Vec<u8> },
}

impl Term {
    pub fn atom(bytes: impl AsRef<[u8]>) -> Term {
        Term::Atom(bytes.as_ref().to_vec())
    }

    pub fn tuple(items: Vec<Term>) -> Term {
        Term::Tuple(items)
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Term::Atom(b) => b.clone(),
            Term::Tuple(items) => {
                let parts: Vec<Vec<u8>> = items.iter().map(Term::encode).collect();
                encode_tuple(&parts)
            }
            Term::Signed { body, sig, .. } => encode_tuple(&[body.encode(), sig.clone()]),
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let tag: &[u8] = match self {
            Term::Atom(_) => b"a",
            Term::Tuple(_) => b"t",
            Term::Signed { .. } => b"s",
        };
        Sha256::digest(encode_tuple(&[tag, &self.encode()])).into()
    }
}

/// Everything the adversary has seen or been given.
#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    terms: BTreeSet<[u8; 32]>,
    leaked: BTreeSet<String>,
    keys: BTreeMap<String, PublicKey>,
}

impl Knowledge {
    /// `keys` maps certificate ids to public keys, used to tell genuine
    /// signatures from garbage bytes.
    pub fn new(keys: BTreeMap<String, PublicKey>) -> Self {
        Self { terms: BTreeSet::new(), leaked: BTreeSet::new(), keys }
    }

    pub fn leak_key(&mut self, cert_id: &str) {
        self.leaked.insert(cert_id.into());
    }

    pub fn has_key(&self, cert_id: &str) -> bool {
        self.leaked.contains(cert_id)
    }

    /// Adds `t` and everything obtainable from it by projection.
    pub fn observe(&mut self, t: &Term) {
        if !self.terms.insert(t.digest()) {
            return;
        }
        match t {
            Term::Atom(_) => {}
            Term::Tuple(items) => items.iter().for_each(|i| self.observe(i)),
            Term::Signed { body, .. } => self.observe(body),
        }
    }

    pub fn knows(&self, t: &Term) -> bool {
        self.terms.contains(&t.digest())
    }

    fn genuine(&self, signer: &str, body: &Term, sig: &[u8]) -> bool {
        self.keys.get(signer).is_some_and(|pk| verify_raw(pk, sig, &body.encode()))
    }

    /// Whether the adversary can build `t` within `depth` construction steps.
    /// Known terms are free; invalid signature bytes are just fresh garbage.
    pub fn derivable(&self, t: &Term, depth: usize) -> bool {
        if self.knows(t) {
            return true;
        }
        match t {
            Term::Atom(_) => false,
            Term::Tuple(items) => depth > 0 && items.iter().all(|i| self.derivable(i, depth - 1)),
            Term::Signed { signer, body, sig } => {
                if !self.genuine(signer, body, sig) {
                    return true;
                }
                depth > 0 && self.leaked.contains(signer) && self.derivable(body, depth - 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{test_principal, Role};
    use alloc::vec;

    #[test]
    fn signed_body_encodes_to_signed_bytes() {
        let (w, _) = test_principal("w", Role::WebServer, "a.com", 1);
        let body = Term::tuple(vec![Term::atom("accjs/sigw"), Term::atom("x")]);
        let sig = w.sign_tuple(&[b"accjs/sigw".as_slice(), b"x"]);
        let mut keys = BTreeMap::new();
        keys.insert(w.cert_id.clone(), w.public_key());
        let k = Knowledge::new(keys);
        assert!(k.genuine(&w.cert_id, &body, &sig));
    }

    #[test]
    fn derivation_rules() {
        let (w, _) = test_principal("w", Role::WebServer, "a.com", 1);
        let mut keys = BTreeMap::new();
        keys.insert(w.cert_id.clone(), w.public_key());
        let mut k = Knowledge::new(keys);
        let n = Term::atom("nonce");
        let body = Term::tuple(vec![Term::atom("label"), n.clone()]);
        let signed = Term::Signed {
            signer: w.cert_id.clone(),
            body: Box::new(body.clone()),
            sig: w.sign_tuple(&[b"label".as_slice(), b"nonce"]).to_vec(),
        };
        assert!(!k.derivable(&n, 4));
        assert!(!k.derivable(&signed, 4));
        k.observe(&Term::tuple(vec![Term::atom("label"), n.clone()]));
        assert!(k.derivable(&n, 0));
        // Knowing the body is not enough without the key.
        assert!(!k.derivable(&signed, 4));
        k.leak_key(&w.cert_id);
        assert!(k.derivable(&signed, 2));
        assert!(!k.derivable(&signed, 0));
        // Garbage signatures can always be produced.
        let fake = Term::Signed { signer: w.cert_id.clone(), body: Box::new(Term::atom("secret")), sig: vec![0; 64] };
        assert!(k.derivable(&fake, 0));
    }

    #[test]
    fn observed_signatures_can_be_replayed() {
        let (w, _) = test_principal("w", Role::WebServer, "a.com", 1);
        let mut keys = BTreeMap::new();
        keys.insert(w.cert_id.clone(), w.public_key());
        let mut k = Knowledge::new(keys);
        let signed = Term::Signed {
            signer: w.cert_id.clone(),
            body: Box::new(Term::atom("m")),
            sig: w.sign_tuple(&[b"m".as_slice()]).to_vec(),
        };
        k.observe(&Term::tuple(vec![Term::atom("x"), signed.clone()]));
        assert!(k.derivable(&Term::tuple(vec![Term::atom("m"), signed]), 1));
    }
}
