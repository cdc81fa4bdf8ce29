//! Criterion benchmarks for the hot paths of `metricmap-core`; see `benches/`.
