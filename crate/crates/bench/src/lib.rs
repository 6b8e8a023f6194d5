//! Criterion benchmarks for the kernels and estimators; run with
//! `cargo bench -p otfs-bench`.
