//! Agent-driven evolutionary library fuzzing.

pub mod agent;
pub mod clock;
pub mod config;
pub mod coverage;
pub mod evolution;
pub mod fuzz;
pub mod stats;
pub mod tools;
pub mod triage;
mod role;
pub mod util;
pub mod workspace;

pub use role::Role;
