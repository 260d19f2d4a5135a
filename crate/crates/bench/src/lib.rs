//! Benchmarks for the robpost engine; see `benches/`.
