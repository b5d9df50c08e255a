//! Experiment plumbing around `pepper-core`: configuration, pretraining,
//! the mode x volatility x seed matrix, analysis tables and SVG plots.

pub mod analyze;
pub mod config;
pub mod matrix;
pub mod plot;
pub mod pretrain;

pub use config::{ConfigError, ExperimentConfig};
pub use matrix::{run_matrix, Cell, CellFilter, MatrixOutcome};
pub use pretrain::{pretrain, Pretrained};
