//! Toolkit for N:M fine-grained sparsity masks.
//!
//! Covers plain and transposable N:M mask construction (exact min-cost
//! flow, greedy 2-approximation, exhaustive oracle), combinatorial
//! mask-diversity counts, violation-probability analytics, and
//! calibration-based weight updates (mean absorption and per-row
//! least-squares refits). The `nmsparse` binary exposes all of it on
//! the command line.

pub mod analytics;
pub mod builders;
pub mod calibrate;
pub mod cli;
pub mod error;
pub mod flow;
pub mod greedy;
pub mod io;
pub mod oracle;
pub mod report;
pub mod strategy;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Mask, Matrix, NmConfig};
