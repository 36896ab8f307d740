//! Library surface of the `rdnp` command-line driver: config parsing, CSV
//! ingestion, the run pipeline, and report serialization. The binary in
//! `main.rs` is a thin wrapper so integration tests can drive everything
//! in-process.

pub mod config;
pub mod csvio;
pub mod error;
pub mod pipeline;
pub mod report;

pub use error::CliError;
