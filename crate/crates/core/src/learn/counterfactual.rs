//! Counterfactual A/B tests: one side of a logged test is re-estimated under
//! a replacement policy and compared against the other side's observations.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{
    estimate_discrete, DiscreteOpeInput, Estimate, EstimatorKind, EvaluationInputs, KernelObjective,
};
use crate::math::mean;
use crate::policy::check_dimension;
use crate::stats::{lift_with_ci, LiftResult};
use crate::types::{LoggedDataset, Metric, Side};

/// One estimator on one metric of `dataset`, with its per-record terms.
pub fn estimate_one(
    dataset: &LoggedDataset,
    inputs: &EvaluationInputs<'_>,
    kind: EstimatorKind,
    metric: Metric,
) -> Result<Estimate> {
    let models = inputs.metrics[metric.index()];
    if kind == EstimatorKind::Continuous {
        let d = inputs.evaluation_payment.dimension();
        if d != 0 {
            check_dimension(dataset.dimension(), d)?;
        }
        let targets: Vec<f64> =
            dataset.records().iter().map(|r| inputs.evaluation_payment.payment(r.context.features())).collect();
        let objective = KernelObjective::new(dataset, inputs.behavior_density, models.kernel, metric)?;
        let report = objective.report(&targets)?;
        return Ok(Estimate { report, terms: objective.terms(&targets)? });
    }
    let input = DiscreteOpeInput {
        dataset,
        binning: inputs.binning,
        behavior: inputs.behavior_bins,
        evaluation: inputs.evaluation_bins,
        reward_model: models.reward_model,
        clip_lambda: inputs.clip_lambda,
        metric,
    };
    estimate_discrete(&input, &[kind]).pop().expect("one estimator requested")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualOutcome {
    pub replaced_side: Side,
    pub estimator: EstimatorKind,
    /// Replaced side's estimated metric means, in [`Metric::ALL`] order.
    pub estimated: [f64; 4],
    /// Other side's observed metric means.
    pub observed: [f64; 4],
    /// Treatment over control, one per metric.
    pub lifts: Vec<LiftResult>,
}

/// Replaces `replace`'s outcomes with the OPE estimate of the policy in
/// `inputs` on that side's log; `inputs` must describe the replaced side's
/// behavior policy. The estimator's per-record terms stand in for the
/// replaced side's observations in the Welch interval.
pub fn counterfactual_test(
    control: &LoggedDataset,
    treatment: &LoggedDataset,
    replace: Side,
    estimator: EstimatorKind,
    inputs: &EvaluationInputs<'_>,
    alpha: f64,
) -> Result<CounterfactualOutcome> {
    if control.dimension() != treatment.dimension() {
        return Err(invalid("control and treatment logs have different context dimensions"));
    }
    let (replaced, other) = match replace {
        Side::Control => (control, treatment),
        Side::Treatment => (treatment, control),
    };
    let mut estimated = [0.0; 4];
    let mut observed = [0.0; 4];
    let mut lifts = Vec::with_capacity(4);
    for metric in Metric::ALL {
        let terms = estimate_one(replaced, inputs, estimator, metric)?.terms;
        let actual = other.metric_values(metric);
        estimated[metric.index()] = mean(&terms);
        observed[metric.index()] = mean(&actual);
        let lift = match replace {
            Side::Control => lift_with_ci(metric, &actual, &terms, alpha)?,
            Side::Treatment => lift_with_ci(metric, &terms, &actual, alpha)?,
        };
        lifts.push(lift);
    }
    Ok(CounterfactualOutcome { replaced_side: replace, estimator, estimated, observed, lifts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::BinningScheme;
    use crate::estimators::{BehaviorSource, DensitySource, MetricModels};
    use crate::models::KernelSpec;
    use crate::policy::{FixedBins, GaussianLoggingDensity, PaymentPolicy};
    use crate::sim::{generate_log, presets, PolicySpec};

    fn inputs<'a>(
        binning: &'a BinningScheme,
        bins: &'a FixedBins,
        density: DensitySource<'a>,
        payment: &'a dyn PaymentPolicy,
        h: f64,
    ) -> EvaluationInputs<'a> {
        let m = MetricModels { reward_model: None, kernel: KernelSpec::gaussian(h).unwrap() };
        EvaluationInputs {
            binning,
            behavior_bins: BehaviorSource::Model(bins),
            evaluation_bins: bins,
            behavior_density: density,
            evaluation_payment: payment,
            metrics: [m; 4],
            clip_lambda: None,
        }
    }

    #[test]
    fn self_replacement_reproduces_observed_lifts() {
        let config = presets::default_auction();
        let control = generate_log(&config, &presets::policy_x(), 400, 1).unwrap();
        let treatment = generate_log(&config, &presets::policy_y(), 400, 2).unwrap().with_labels("y", Side::Treatment);
        let binning = crate::binning::make_binning(&control, 5).unwrap();
        let bins = FixedBins::uniform(5);
        let x = presets::policy_x();
        let input = inputs(&binning, &bins, DensitySource::Logged, &x, 0.2);
        for side in [Side::Control, Side::Treatment] {
            let out = counterfactual_test(&control, &treatment, side, EstimatorKind::Ipw, &input, 0.05).unwrap();
            for (metric, lift) in Metric::ALL.iter().zip(&out.lifts) {
                let observed =
                    lift_with_ci(*metric, &treatment.metric_values(*metric), &control.metric_values(*metric), 0.05).unwrap();
                assert!((lift.lift_percent - observed.lift_percent).abs() < 1e-9, "{side:?} {metric}");
                assert!((lift.ci_low - observed.ci_low).abs() < 1e-9);
                assert!((lift.ci_high - observed.ci_high).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_payment_replacement_has_no_cost() {
        let config = presets::default_auction();
        let control = generate_log(&config, &presets::policy_x(), 3000, 5).unwrap();
        let treatment = generate_log(&config, &presets::policy_z(), 3000, 6).unwrap().with_labels("z", Side::Treatment);
        let binning = crate::binning::make_binning(&control, 5).unwrap();
        let bins = FixedBins::uniform(5);
        let zero = PolicySpec::constant(0.0);
        let z = presets::policy_z();
        let density = GaussianLoggingDensity { policy: &z, noise_sd: presets::LOGGING_NOISE_SD };
        let input = inputs(&binning, &bins, DensitySource::Model(&density), &zero, 0.1);
        let out = counterfactual_test(&control, &treatment, Side::Treatment, EstimatorKind::Continuous, &input, 0.05).unwrap();
        let cost = Metric::Cost.index();
        // The kernel mass at 0 sits on near-zero payments, which almost never win.
        assert!(out.estimated[cost].abs() < 0.02 * out.observed[cost], "{:?}", out.estimated);
        assert!((out.lifts[cost].lift_percent + 100.0).abs() < 2.0, "{}", out.lifts[cost].lift_percent);
    }
}
