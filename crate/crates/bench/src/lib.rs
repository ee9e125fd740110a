//! Criterion benchmarks live under `benches/`; this crate exports nothing.
