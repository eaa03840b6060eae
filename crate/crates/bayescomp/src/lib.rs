//! File formats, experiment harness and oracle suites on top of
//! `bayescomp-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod model_file;
pub mod suites;
pub mod technique;

pub use error::{HarnessError, Result};
