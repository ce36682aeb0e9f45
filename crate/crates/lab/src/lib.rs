//! File formats, experiment configuration, orchestration and report output
//! around `rawzero-core`.

pub mod artifacts;
pub mod checkpoint;
pub mod cifar;
pub mod commands;
pub mod config;
pub mod csvdata;
pub mod error;
pub mod idx;
pub mod parallel;
pub mod svg;

pub use error::{LabError, Result};
