//! Ordering of manifest version strings.
//!
//! A version is read as an optional non-digit prefix followed by a decimal
//! suffix (`v0`, `v12`, `1.2.10`, `42`). Two versions with the same prefix
//! compare by the numeric value of their suffix; different prefixes compare
//! lexicographically. Strings without a numeric suffix compare
//! lexicographically among themselves, but cannot be ordered against
//! suffixed versions.

use alloc::string::String;
use core::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("versions `{0}` and `{1}` use incompatible numbering schemes")]
pub struct IncomparableVersions(pub String, pub String);

fn split(v: &str) -> Option<(&str, &str)> {
    let digits = v.bytes().rev().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    Some(v.split_at(v.len() - digits))
}

fn cmp_decimal(a: &str, b: &str) -> Ordering {
    let a = a.trim_start_matches('0');
    let b = b.trim_start_matches('0');
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

pub fn compare_versions(a: &str, b: &str) -> Result<Ordering, IncomparableVersions> {
    match (split(a), split(b)) {
        (Some((pa, na)), Some((pb, nb))) if pa == pb => {
            // Leading zeros tie numerically; fall back to the raw text so the
            // order stays strict over distinct strings.
            Ok(cmp_decimal(na, nb).then_with(|| a.cmp(b)))
        }
        (Some((pa, _)), Some((pb, _))) => Ok(pa.cmp(pb)),
        (None, None) => Ok(a.cmp(b)),
        _ => Err(IncomparableVersions(a.into(), b.into())),
    }
}
