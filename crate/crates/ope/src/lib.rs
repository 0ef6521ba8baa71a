//! File formats, artifact manifests, experiment plans and the `ope`
//! command line around the core estimators.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod model;
pub mod parallel;
pub mod plan;
pub mod report;

pub use error::{OpeError, Result};
