//! Canonical length-prefixed tuple encoding.
//!
//! A tuple `(f1, .., fk)` of byte strings encodes as
//! `len(f1) || f1 || .. || len(fk) || fk` where every length is an 8-byte
//! big-endian integer. The encoding is self-delimiting, so it is injective
//! over tuples of any arity. Every signature in the crate is computed over
//! this encoding, with a domain label as the first field.

use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated length prefix at offset {0}")]
    TruncatedLength(usize),
    #[error("field at offset {offset} declares {declared} bytes but only {available} remain")]
    TruncatedField { offset: usize, declared: u64, available: usize },
}

pub fn encode_tuple<F: AsRef<[u8]>>(fields: &[F]) -> Vec<u8> {
    let total: usize = fields.iter().map(|f| 8 + f.as_ref().len()).sum();
    let mut out = Vec::with_capacity(total);
    for field in fields {
        let field = field.as_ref();
        out.extend_from_slice(&(field.len() as u64).to_be_bytes());
        out.extend_from_slice(field);
    }
    out
}

pub fn decode_tuple(mut bytes: &[u8]) -> Result<Vec<Vec<u8>>, DecodeError> {
    let mut fields = Vec::new();
    let mut offset = 0;
    while !bytes.is_empty() {
        if bytes.len() < 8 {
            return Err(DecodeError::TruncatedLength(offset));
        }
        let (len, rest) = bytes.split_at(8);
        let declared = u64::from_be_bytes(len.try_into().expect("8-byte prefix"));
        if (rest.len() as u64) < declared {
            return Err(DecodeError::TruncatedField { offset, declared, available: rest.len() });
        }
        let (field, rest) = rest.split_at(declared as usize);
        fields.push(field.to_vec());
        offset += 8 + field.len();
        bytes = rest;
    }
    Ok(fields)
}

/// Serde adapter writing byte strings as standard base64 text.
pub mod base64_bytes {
    use alloc::string::String;
    use alloc::vec::Vec;

    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, B: AsRef<[u8]>>(bytes: &B, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes.as_ref()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, B: TryFrom<Vec<u8>>>(d: D) -> Result<B, D::Error> {
        let text = String::deserialize(d)?;
        let raw = STANDARD.decode(text.as_bytes()).map_err(serde::de::Error::custom)?;
        let len = raw.len();
        B::try_from(raw).map_err(|_| serde::de::Error::custom(alloc::format!("unexpected length {len}")))
    }
}
