//! Criterion benchmarks for the convolution kernels and a full training
//! step. Run with `cargo bench -p cdil-bench`.
