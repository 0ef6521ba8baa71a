//! Off-policy estimators of a policy's per-round value from logged data.
//!
//! Discrete estimators reweight logged rewards by bin-probability ratios;
//! the continuous estimator smooths over the payment axis with a kernel.

mod continuous;
mod discrete;
mod evaluate;
mod reward;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::{mean, sample_variance, sqrt};

pub use continuous::{continuous_estimate, continuous_estimate_gradient, ContinuousOpeInput, DensitySource, KernelObjective};
pub use discrete::{
    dm, dr, estimate_discrete, importance_weights, ipw, sndr, snipw, BehaviorSource, DiscreteOpeInput, WeightSummary,
};
pub use evaluate::{evaluate_all, EvaluationCell, EvaluationInputs, MetricModels};
pub use reward::{fit_reward_model, fit_reward_model_with, RewardModelParams, RewardPredictions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ipw,
    Snipw,
    Dm,
    Dr,
    Sndr,
    Continuous,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Ipw,
        EstimatorKind::Snipw,
        EstimatorKind::Dm,
        EstimatorKind::Dr,
        EstimatorKind::Sndr,
        EstimatorKind::Continuous,
    ];

    pub const DISCRETE: [EstimatorKind; 5] =
        [EstimatorKind::Ipw, EstimatorKind::Snipw, EstimatorKind::Dm, EstimatorKind::Dr, EstimatorKind::Sndr];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Snipw => "snipw",
            EstimatorKind::Dm => "dm",
            EstimatorKind::Dr => "dr",
            EstimatorKind::Sndr => "sndr",
            EstimatorKind::Continuous => "continuous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn needs_reward_model(self) -> bool {
        matches!(self, EstimatorKind::Dm | EstimatorKind::Dr | EstimatorKind::Sndr)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Point estimate with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator_name: String,
    pub metric: String,
    pub value: f64,
    /// Standard error from the per-record influence terms.
    pub std_error: f64,
    /// `(sum w)^2 / sum w^2` over the weights the estimator used.
    pub effective_sample_size: f64,
    pub clipped_fraction: f64,
    pub n: usize,
    /// Records whose behavior propensity came from the log rather than a model.
    pub logged_propensity_count: usize,
}

/// An estimate together with per-record terms whose mean is the estimate.
///
/// Self-normalized estimators use their linearization, so the sample
/// variance of the terms gives a delta-method standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub report: EstimateReport,
    pub terms: Vec<f64>,
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

pub(crate) fn terms_std_error(terms: &[f64]) -> f64 {
    if terms.len() < 2 {
        return 0.0;
    }
    sqrt(sample_variance(terms) / terms.len() as f64)
}

pub(crate) fn terms_mean(terms: &[f64]) -> f64 {
    mean(terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ess_of_equal_weights_is_n() {
        assert_eq!(effective_sample_size(&[2.0; 7]), 7.0);
        assert_eq!(effective_sample_size(&[1.0, 0.0]), 1.0);
        assert_eq!(effective_sample_size(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::parse(k.name()), Some(k));
        }
    }
}
