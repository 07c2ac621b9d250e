//! Transcript-driven soundtrack generation for tabletop role-playing sessions,
//! and the metrics used to evaluate the resulting music.
//!
//! The crate is organised along the data flow:
//! [`ingest`] → [`director`] → [`gateway`] → [`assembler`] → [`metrics`],
//! with [`pipeline`] wiring the stages into reproducible runs.

pub mod assembler;
pub mod director;
pub mod gateway;
pub mod hashing;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
