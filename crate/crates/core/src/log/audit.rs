//! Helpers for auditors comparing log views.

use super::LogEntry;
use crate::time::{Timestamp, MONTH};

/// True when one history is a prefix of the other, i.e. the two views are
/// compatible. A fork (same position, different entry) returns false.
pub fn check_prefix_consistency(a: &[LogEntry], b: &[LogEntry]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        x.url == y.url
            && x.manifest_version == y.manifest_version
            && x.manifest_digest == y.manifest_digest
            && x.entry_digest == y.entry_digest
            && x.ts == y.ts
    })
}

/// Updates per 30-day month among `history` entries with `from <= ts < to`.
pub fn update_frequency<'a, I>(history: I, from: Timestamp, to: Timestamp) -> f64
where
    I: IntoIterator<Item = &'a LogEntry>,
{
    if to <= from {
        return 0.0;
    }
    let n = history.into_iter().filter(|e| e.ts >= from && e.ts < to).count();
    n as f64 * MONTH as f64 / (to.secs() - from.secs()) as f64
}
