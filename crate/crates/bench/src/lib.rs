//! Benchmark-only crate; see `benches/campaign.rs`.
