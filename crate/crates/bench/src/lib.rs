//! Benchmark harness for the `stiffexp` integrators on the Beeler–Reuter
//! model: single runs, cached reference solutions, convergence, cost and
//! stability studies, and CSV output.

pub mod cache;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod expectations;
pub mod study;

pub use config::RunConfig;
