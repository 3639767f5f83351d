//! Criterion benchmarks for the epbridge kernels; see `benches/`.
