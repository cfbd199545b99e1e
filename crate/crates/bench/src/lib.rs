//! Criterion benchmarks for the morphoprobe kernels; see `benches/kernels.rs`.
