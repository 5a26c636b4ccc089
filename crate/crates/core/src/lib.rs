//! Weekly municipality panels for mobility / epidemic-growth studies.
//!
//! The crate covers the whole pipeline: record-level ingestion into a
//! [`panel::WeeklyPanel`], keyword-count soft indexes, causal DAGs used to
//! pick control blocks, two-way fixed-effects and Arellano-Bond estimation,
//! a structural simulator with known parameters, and regression-table
//! reporting.

pub mod dag;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod ingest;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod sim;
pub mod soft_index;

pub use error::{Error, Result};
pub use exec::Execution;
