//! Off-policy evaluation of auction payment policies.
//!
//! Discrete (binned-payment) and continuous (kernel-smoothed) estimators,
//! the auction simulator used to generate logs with known ground truth, and
//! a learner that fits a payment network directly against an off-policy
//! objective.

#![no_std]
// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod binning;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod experiments;
pub mod learn;
pub mod math;
pub mod models;
pub mod policy;
pub mod sim;
pub mod stats;
pub mod types;
pub mod validation;

pub use error::{Error, Result};
