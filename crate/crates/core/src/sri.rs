//! Subresource Integrity hashes (`<alg>-<base64digest>`).

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256, Sha384, Sha512};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HashAlgorithm {
    Sha256,
    Sha384,
    Sha512,
}

impl HashAlgorithm {
    pub const ALL: [HashAlgorithm; 3] = [HashAlgorithm::Sha256, HashAlgorithm::Sha384, HashAlgorithm::Sha512];

    pub fn name(self) -> &'static str {
        match self {
            HashAlgorithm::Sha256 => "sha256",
            HashAlgorithm::Sha384 => "sha384",
            HashAlgorithm::Sha512 => "sha512",
        }
    }

    pub fn digest_len(self) -> usize {
        match self {
            HashAlgorithm::Sha256 => 32,
            HashAlgorithm::Sha384 => 48,
            HashAlgorithm::Sha512 => 64,
        }
    }

    pub fn digest(self, bytes: &[u8]) -> Vec<u8> {
        match self {
            HashAlgorithm::Sha256 => Sha256::digest(bytes).to_vec(),
            HashAlgorithm::Sha384 => Sha384::digest(bytes).to_vec(),
            HashAlgorithm::Sha512 => Sha512::digest(bytes).to_vec(),
        }
    }
}

impl FromStr for HashAlgorithm {
    type Err = SriError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sha256" => Ok(HashAlgorithm::Sha256),
            "sha384" => Ok(HashAlgorithm::Sha384),
            "sha512" => Ok(HashAlgorithm::Sha512),
            other => Err(SriError::UnsupportedAlgorithm(other.to_string())),
        }
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SriError {
    #[error("unsupported hash algorithm `{0}`")]
    UnsupportedAlgorithm(String),
    #[error("integrity value `{0}` is not of the form <alg>-<base64>")]
    Malformed(String),
    #[error("digest is not valid base64")]
    BadBase64,
    #[error("{alg} digest must be {expected} bytes, got {actual}")]
    WrongLength { alg: HashAlgorithm, expected: usize, actual: usize },
}

/// An integrity value: algorithm plus raw digest bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SriHash {
    algorithm: HashAlgorithm,
    digest: Vec<u8>,
}

impl SriHash {
    pub fn new(algorithm: HashAlgorithm, digest: Vec<u8>) -> Result<Self, SriError> {
        if digest.len() != algorithm.digest_len() {
            return Err(SriError::WrongLength { alg: algorithm, expected: algorithm.digest_len(), actual: digest.len() });
        }
        Ok(Self { algorithm, digest })
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn digest(&self) -> &[u8] {
        &self.digest
    }

    /// True if `bytes` hash to this value under its own algorithm.
    pub fn matches(&self, bytes: &[u8]) -> bool {
        self.algorithm.digest(bytes) == self.digest
    }
}

pub fn compute_sri(bytes: &[u8], alg: HashAlgorithm) -> SriHash {
    SriHash { algorithm: alg, digest: alg.digest(bytes) }
}

/// Like [`compute_sri`], but takes the algorithm by name.
pub fn compute_sri_named(bytes: &[u8], alg: &str) -> Result<SriHash, SriError> {
    Ok(compute_sri(bytes, alg.parse()?))
}

impl fmt::Display for SriHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.algorithm, STANDARD.encode(&self.digest))
    }
}

impl FromStr for SriHash {
    type Err = SriError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (alg, b64) = s.split_once('-').ok_or_else(|| SriError::Malformed(s.to_string()))?;
        let algorithm: HashAlgorithm = alg.parse()?;
        let digest = STANDARD.decode(b64.trim()).map_err(|_| SriError::BadBase64)?;
        SriHash::new(algorithm, digest)
    }
}

impl Serialize for SriHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SriHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Digests of one piece of content under every supported algorithm, so a
/// declared hash can be checked whichever algorithm it names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentDigests(Vec<SriHash>);

impl ContentDigests {
    pub fn of(bytes: &[u8]) -> Self {
        Self(HashAlgorithm::ALL.iter().map(|alg| compute_sri(bytes, *alg)).collect())
    }

    /// Digest set holding a single known value, e.g. an `integrity` attribute.
    pub fn single(hash: SriHash) -> Self {
        Self(alloc::vec![hash])
    }

    pub fn get(&self, alg: HashAlgorithm) -> Option<&SriHash> {
        self.0.iter().find(|h| h.algorithm == alg)
    }

    /// The preferred digest: sha256 when known, otherwise the first one.
    pub fn primary(&self) -> Option<&SriHash> {
        self.get(HashAlgorithm::Sha256).or_else(|| self.0.first())
    }

    /// `Some(true/false)` if a digest under `expected`'s algorithm is known.
    pub fn check(&self, expected: &SriHash) -> Option<bool> {
        self.get(expected.algorithm).map(|h| h == expected)
    }
}
