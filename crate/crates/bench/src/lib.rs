//! Benchmarks live in `benches/`; run them with `cargo bench -p w2reg-bench`.
