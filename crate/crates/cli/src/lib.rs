//! Experiment orchestration: corpus preparation, the training grid,
//! evaluation tables, analyses and the summary report.

pub mod analyze;
pub mod config;
pub mod evaluate;
pub mod grid;
pub mod prepare;
pub mod report;
pub mod stats;
pub mod train;

pub use config::ExperimentConfig;
pub use grid::{Cell, Variant};
