//! On-disk record framing: `len (8 bytes, big endian) || JSON(LogEntry)`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::LogEntry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("record at offset {offset} is not a valid entry: {reason}")]
    BadRecord { offset: usize, reason: String },
}

pub fn encode_record(entry: &LogEntry) -> Vec<u8> {
    let json = serde_json::to_vec(entry).expect("log entry serialization cannot fail");
    let mut out = Vec::with_capacity(8 + json.len());
    out.extend_from_slice(&(json.len() as u64).to_be_bytes());
    out.extend_from_slice(&json);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedLog {
    pub entries: Vec<LogEntry>,
    /// Length of the prefix made of complete records. Anything after it is a
    /// torn write and should be truncated.
    pub valid_len: usize,
}

pub fn decode_records(bytes: &[u8]) -> Result<DecodedLog, RecordError> {
    let mut entries = Vec::new();
    let mut offset = 0;
    while bytes.len() - offset >= 8 {
        let len = u64::from_be_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes")) as usize;
        let start = offset + 8;
        if bytes.len() - start < len {
            break;
        }
        let entry = serde_json::from_slice(&bytes[start..start + len])
            .map_err(|e| RecordError::BadRecord { offset, reason: e.to_string() })?;
        entries.push(entry);
        offset = start + len;
    }
    Ok(DecodedLog { entries, valid_len: offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::tests::{fixture, submission};
    use crate::time::Timestamp;

    #[test]
    fn torn_tail_is_ignored() {
        let mut f = fixture();
        let mut bytes = Vec::new();
        for v in ["v0", "v1"] {
            let e = f.log.submit(&submission(&f, "http://www.helloworld.com/", v, 0), &f.registry, Timestamp(0)).unwrap();
            bytes.extend(encode_record(&e));
        }
        let full = bytes.len();
        let d = decode_records(&bytes).unwrap();
        assert_eq!(d.entries, f.log.entries());
        assert_eq!(d.valid_len, full);
        for cut in [full - 1, full - 30, full - (full / 2) + 3] {
            let d = decode_records(&bytes[..cut]).unwrap();
            assert_eq!(d.entries.len(), 1);
            assert!(d.valid_len < cut);
        }
        bytes[20] = b'!';
        assert!(decode_records(&bytes).is_err());
    }
}
