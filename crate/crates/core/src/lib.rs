//! Impactibility modeling: estimate who benefits from a post-discharge
//! intervention with honest causal forests, test the heterogeneity signal,
//! and compare targeting policies against risk-based assignment.

pub mod calibration;
pub mod cohort;
pub mod diagnostics;
pub mod error;
pub mod forest;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
