//! Criterion benchmarks for the simulation and solver kernels live in
//! `benches/`.
