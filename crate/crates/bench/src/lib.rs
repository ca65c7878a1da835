//! Criterion benchmarks for the varlab kernels and training loop; see `benches/`.
