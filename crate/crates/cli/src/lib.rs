//! `smpirun`: launches a job of N ranks over the in-process or TCP transport
//! and runs one of the bundled example programs on it.
//!
//! For TCP the launcher re-invokes its own binary once per rank with the
//! `SMPI_*` variables set; rank 0 hosts the coordinator. Each rank's exit code
//! is collected, and the job's exit code is the lowest-ranked nonzero one.

pub mod conformance;
pub mod examples;
pub mod launch;

pub use examples::Example;
pub use launch::{LaunchConfig, TransportKind};
