//! Benchmark-only crate; see `benches/closed_forms.rs`.
