//! Benchmarks live in `benches/`: `cargo bench -p evade-bench`.
