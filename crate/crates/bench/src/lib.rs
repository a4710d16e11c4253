//! Criterion benchmarks for the xlbeam kernels live in `benches/`.
