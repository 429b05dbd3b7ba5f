//! Simulator and stability toolkit for multiresource-job scheduling with
//! continuously distributed requirements.
//!
//! Jobs arrive in a Poisson stream, each demanding a fraction of one or more
//! unit resources for an exponentially distributed duration. The crate
//! discretizes the requirement cube into job types, enumerates admissible
//! service options, checks and constructs stability certificates (service
//! mixes dominating the arrival rates), and simulates the queue under
//! MaxWeight, nonpreemptive Markovian service-rate, and greedy baseline
//! policies.

pub mod cli;
pub mod config;
pub mod dist;
pub mod dominance;
pub mod error;
pub mod grid;
pub mod lp;
pub mod policy;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    cli::run()
}
