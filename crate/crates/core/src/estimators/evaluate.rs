use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    estimate_discrete, BehaviorSource, ContinuousOpeInput, DensitySource, DiscreteOpeInput, EstimateReport, EstimatorKind,
    RewardPredictions,
};
use crate::binning::BinningScheme;
use crate::exec::Executor;
use crate::models::KernelSpec;
use crate::policy::{BinPolicy, PaymentPolicy};
use crate::types::{LoggedDataset, Metric};

/// Per-metric models: the reward model for DM/DR/SNDR and the kernel of the
/// continuous estimator.
#[derive(Clone, Copy)]
pub struct MetricModels<'a> {
    pub reward_model: Option<&'a RewardPredictions>,
    pub kernel: KernelSpec,
}

#[derive(Clone, Copy)]
pub struct EvaluationInputs<'a> {
    pub binning: &'a BinningScheme,
    pub behavior_bins: BehaviorSource<'a>,
    pub evaluation_bins: &'a dyn BinPolicy,
    pub behavior_density: DensitySource<'a>,
    pub evaluation_payment: &'a dyn PaymentPolicy,
    /// Indexed like [`Metric::ALL`].
    pub metrics: [MetricModels<'a>; 4],
    pub clip_lambda: Option<f64>,
}

/// One estimator on one metric; exactly one of `report` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCell {
    pub estimator: EstimatorKind,
    pub metric: Metric,
    pub report: Option<EstimateReport>,
    pub error: Option<String>,
}

impl EvaluationCell {
    fn from_result(estimator: EstimatorKind, metric: Metric, r: crate::Result<EstimateReport>) -> Self {
        match r {
            Ok(report) => Self { estimator, metric, report: Some(report), error: None },
            Err(e) => Self { estimator, metric, report: None, error: Some(e.to_string()) },
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.value)
    }
}

/// Every estimator on every metric, estimator-major in [`EstimatorKind::ALL`]
/// and [`Metric::ALL`] order. Failures stay confined to their cells.
pub fn evaluate_all<E: Executor>(dataset: &LoggedDataset, inputs: &EvaluationInputs<'_>, exec: &E) -> Vec<EvaluationCell> {
    let per_metric = exec.map_indexed(Metric::ALL.len(), |m| {
        let metric = Metric::ALL[m];
        let models = inputs.metrics[m];
        let discrete = DiscreteOpeInput {
            dataset,
            binning: inputs.binning,
            behavior: inputs.behavior_bins,
            evaluation: inputs.evaluation_bins,
            reward_model: models.reward_model,
            clip_lambda: inputs.clip_lambda,
            metric,
        };
        let mut cells: Vec<_> = estimate_discrete(&discrete, &EstimatorKind::DISCRETE)
            .into_iter()
            .zip(EstimatorKind::DISCRETE)
            .map(|(r, k)| EvaluationCell::from_result(k, metric, r.map(|e| e.report)))
            .collect();
        let continuous = ContinuousOpeInput {
            dataset,
            evaluation: inputs.evaluation_payment,
            behavior: inputs.behavior_density,
            kernel: models.kernel,
            metric,
        };
        cells.push(EvaluationCell::from_result(EstimatorKind::Continuous, metric, super::continuous_estimate(&continuous)));
        cells
    });
    let mut out = Vec::with_capacity(EstimatorKind::ALL.len() * Metric::ALL.len());
    for k in 0..EstimatorKind::ALL.len() {
        for cells in &per_metric {
            out.push(cells[k].clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::policy::{FixedBins, GaussianLoggingBins, GaussianLoggingDensity};
    use crate::sim::{generate_log, presets};

    #[test]
    fn full_table_and_partial_failure() {
        let cfg = presets::default_auction();
        let x = presets::policy_x();
        let log = generate_log(&cfg, &x, 400, 3).unwrap();
        let binning = crate::binning::make_binning(&log, 5).unwrap();
        let behavior = GaussianLoggingBins { policy: &x, noise_sd: x.noise_sd, binning: &binning };
        let density = GaussianLoggingDensity { policy: &x, noise_sd: x.noise_sd };
        let q = RewardPredictions::zeros(log.len(), 5);
        let kernel = KernelSpec::gaussian(0.2).unwrap();
        let with_models = MetricModels { reward_model: Some(&q), kernel };
        let inputs = EvaluationInputs {
            binning: &binning,
            behavior_bins: BehaviorSource::Model(&behavior),
            evaluation_bins: &behavior,
            behavior_density: DensitySource::Model(&density),
            evaluation_payment: &x,
            metrics: [with_models; 4],
            clip_lambda: None,
        };
        let cells = evaluate_all(&log, &inputs, &Sequential);
        assert_eq!(cells.len(), 24);
        assert!(cells.iter().all(|c| c.report.is_some()));
        // Identical behavior and evaluation policies: IPW is the sample mean.
        for c in cells.iter().filter(|c| c.estimator == EstimatorKind::Ipw) {
            assert_eq!(c.value().unwrap(), log.metric_mean(c.metric));
        }
        assert_eq!((cells[0].estimator, cells[0].metric), (EstimatorKind::Ipw, Metric::Cost));
        assert_eq!((cells[23].estimator, cells[23].metric), (EstimatorKind::Continuous, Metric::Returns));

        let without = EvaluationInputs { metrics: [MetricModels { reward_model: None, kernel }; 4], ..inputs };
        let cells = evaluate_all(&log, &without, &Sequential);
        let failed: Vec<_> = cells.iter().filter(|c| c.error.is_some()).collect();
        assert_eq!(failed.len(), 12);
        assert!(failed.iter().all(|c| c.estimator.needs_reward_model()));
    }

    #[test]
    fn mismatched_bins_fail_only_discrete_cells() {
        let cfg = presets::default_auction();
        let x = presets::policy_x();
        let log = generate_log(&cfg, &x, 100, 3).unwrap();
        let binning = crate::binning::make_binning(&log, 4).unwrap();
        let wrong = FixedBins::uniform(3);
        let density = GaussianLoggingDensity { policy: &x, noise_sd: x.noise_sd };
        let m = MetricModels { reward_model: None, kernel: KernelSpec::gaussian(0.3).unwrap() };
        let inputs = EvaluationInputs {
            binning: &binning,
            behavior_bins: BehaviorSource::Model(&wrong),
            evaluation_bins: &wrong,
            behavior_density: DensitySource::Logged,
            evaluation_payment: &x,
            metrics: [m; 4],
            clip_lambda: None,
        };
        let _ = density;
        let cells = evaluate_all(&log, &inputs, &Sequential);
        assert_eq!(cells.iter().filter(|c| c.report.is_some()).count(), 4);
    }
}
