//! Criterion benchmarks of the training hot paths live in `benches/`.
