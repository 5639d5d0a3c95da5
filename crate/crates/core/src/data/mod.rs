//! Flat-file ingestion and the synthetic incident generator.

pub mod io;
pub mod synth;

pub use io::*;
