//! Library side of the `driftbench` command: config parsing, the experiment
//! matrix, and report rendering.

pub mod config;
pub mod experiment;
pub mod io;
pub mod report;
pub mod run;
pub mod svg;

pub use config::ExperimentConfig;
