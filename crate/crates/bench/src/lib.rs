//! Criterion benchmarks for `ordcopula`; the benchmarks live in `benches/`.
