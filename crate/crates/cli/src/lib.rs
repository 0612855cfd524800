//! File formats and synthetic data for the `rkm` command-line tools.
//!
//! The binary crate stays thin; everything testable lives here: vector file
//! IO (text and binary), index persistence, and the seeded matrix-factor
//! style generator used for benchmarks.

pub mod index_io;
pub mod io;
pub mod synth;
