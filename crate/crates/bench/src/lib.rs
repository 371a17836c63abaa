//! Criterion benchmarks for the triage kernels live in `benches/`.
