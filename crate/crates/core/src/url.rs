//! Minimal absolute-URL handling: validation, query stripping, host
//! extraction and common-name matching. Relative resolution is done by the
//! std companion crate.

use alloc::string::{String, ToString};

/// Removes everything from the first `?` onward.
pub fn strip_query(url: &str) -> &str {
    match url.find('?') {
        Some(i) => &url[..i],
        None => url,
    }
}

fn split_scheme(url: &str) -> Option<(&str, &str)> {
    let (scheme, rest) = url.split_once("://")?;
    let mut chars = scheme.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() || !chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        return None;
    }
    Some((scheme, rest))
}

/// Lowercased host of an absolute `scheme://host[:port]/...` URL.
pub fn host(url: &str) -> Option<String> {
    let (_, rest) = split_scheme(url)?;
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let authority = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = match authority.strip_prefix('[') {
        Some(v6) => v6.split(']').next().unwrap_or(""),
        None => authority.split(':').next().unwrap_or(""),
    };
    if host.is_empty() || host.chars().any(|c| c.is_whitespace()) {
        return None;
    }
    Some(host.to_ascii_lowercase())
}

pub fn is_absolute_url(url: &str) -> bool {
    host(url).is_some()
}

/// Host with a leading `www.` label removed.
pub fn registrable_host(url: &str) -> Option<String> {
    let h = host(url)?;
    Some(match h.strip_prefix("www.") {
        Some(rest) if !rest.is_empty() => rest.to_string(),
        _ => h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CnMatch {
    /// The certificate common name must equal the URL host (modulo `www.`).
    #[default]
    Exact,
    /// The URL host may also be any subdomain of the common name.
    Suffix,
}

pub fn common_name_matches(common_name: &str, url: &str, mode: CnMatch) -> bool {
    let Some(host) = registrable_host(url) else {
        return false;
    };
    let cn = common_name.trim_end_matches('.').to_ascii_lowercase();
    let cn = cn.strip_prefix("www.").unwrap_or(&cn);
    if host == cn {
        return true;
    }
    mode == CnMatch::Suffix && host.len() > cn.len() && host.ends_with(cn) && host.as_bytes()[host.len() - cn.len() - 1] == b'.'
}
