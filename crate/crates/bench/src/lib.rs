//! Criterion benchmarks for the solvers and classifier; see `benches/solvers.rs`.
