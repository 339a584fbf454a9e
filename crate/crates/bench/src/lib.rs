//! Criterion benchmarks for `vbt-core`; see `benches/`. Run with
//! `cargo bench -p vbt-bench`.
