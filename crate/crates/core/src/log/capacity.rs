//! Storage capacity arithmetic for the log.

/// Storage cost model. `per_entry_bytes` is the leaf record plus the
/// amortized share of internal tree nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityModel {
    pub leaf_bytes: u64,
    pub internal_overhead_bytes: u64,
    pub total_bytes: u128,
}

impl CapacityModel {
    pub const LEAF_BYTES: u64 = 700;
    pub const AMORTIZED_INTERNAL_BYTES: u64 = 30;

    pub fn with_total(total_bytes: u128) -> Self {
        Self { leaf_bytes: Self::LEAF_BYTES, internal_overhead_bytes: Self::AMORTIZED_INTERNAL_BYTES, total_bytes }
    }

    /// Model with a given all-in cost per entry.
    pub fn with_per_entry(total_bytes: u128, per_entry_bytes: u64) -> Self {
        let leaf = Self::LEAF_BYTES.min(per_entry_bytes);
        Self { leaf_bytes: leaf, internal_overhead_bytes: per_entry_bytes - leaf, total_bytes }
    }

    pub fn per_entry_bytes(&self) -> u64 {
        self.leaf_bytes + self.internal_overhead_bytes
    }
}

/// Number of entries that fit, rounded down.
pub fn capacity_estimate(model: &CapacityModel) -> u128 {
    match model.per_entry_bytes() {
        0 => 0,
        per => model.total_bytes / per as u128,
    }
}

/// Publication growth: every URL publishes an update each round and the URL
/// population grows by a fixed percentage per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthScenario {
    pub initial_urls: u64,
    pub updates_per_month: u64,
    pub growth_percent_per_update: u64,
    pub months: u64,
}

impl GrowthScenario {
    pub fn default_scenario() -> Self {
        Self { initial_urls: 10_000_000, updates_per_month: 8, growth_percent_per_update: 1, months: 60 }
    }
}

/// Total entries written: the initial manifest of every URL plus one entry
/// per URL per update round, with new URLs joining before each round.
/// Returns `(entries, urls_at_end)`.
pub fn growth_entries(s: &GrowthScenario) -> (u128, u128) {
    let mut urls = s.initial_urls as u128;
    let mut entries = urls;
    for _ in 0..s.updates_per_month * s.months {
        let new = urls * s.growth_percent_per_update as u128 / 100;
        urls += new;
        entries += urls;
    }
    (entries, urls)
}
