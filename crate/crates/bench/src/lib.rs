//! Criterion benchmarks for driftlens live in `benches/`.
