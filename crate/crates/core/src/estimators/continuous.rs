use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{effective_sample_size, terms_std_error, EstimateReport, EstimatorKind};
use crate::error::{invalid, Error, Result};
use crate::models::{KernelSpec, PROPENSITY_FLOOR};
use crate::policy::{check_dimension, BehaviorDensity, PaymentPolicy};
use crate::types::{LoggedDataset, Metric};

/// Where behavior densities of the logged payments come from.
#[derive(Clone, Copy)]
pub enum DensitySource<'a> {
    /// Logged propensities, which must be densities.
    Logged,
    Model(&'a dyn BehaviorDensity),
    /// Logged density when the record has one, the model otherwise.
    LoggedOrModel(&'a dyn BehaviorDensity),
}

#[derive(Clone, Copy)]
pub struct ContinuousOpeInput<'a> {
    pub dataset: &'a LoggedDataset,
    pub evaluation: &'a dyn PaymentPolicy,
    pub behavior: DensitySource<'a>,
    pub kernel: KernelSpec,
    pub metric: Metric,
}

/// The kernel estimator as a function of the evaluation payments.
///
/// Holds the logged payments and `reward / density` per record, so it can be
/// evaluated and differentiated at any vector of target payments.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelObjective {
    actions: Vec<f64>,
    rewards: Vec<f64>,
    inverse_densities: Vec<f64>,
    kernel: KernelSpec,
    metric: Metric,
    logged_propensity_count: usize,
}

impl KernelObjective {
    pub fn new(dataset: &LoggedDataset, behavior: DensitySource<'_>, kernel: KernelSpec, metric: Metric) -> Result<Self> {
        let mut inverse_densities = Vec::with_capacity(dataset.len());
        let mut logged_propensity_count = 0;
        for (i, r) in dataset.records().iter().enumerate() {
            let q = match (behavior, r.logged_propensity) {
                (DensitySource::Logged | DensitySource::LoggedOrModel(_), Some(p)) => {
                    logged_propensity_count += 1;
                    p
                }
                (DensitySource::Logged, None) => return Err(invalid(format!("record {i} has no logged density"))),
                (DensitySource::Model(m), _) | (DensitySource::LoggedOrModel(m), None) => {
                    m.density(r.context.features(), r.action)
                }
            };
            inverse_densities.push(1.0 / q.max(PROPENSITY_FLOOR));
        }
        Ok(Self {
            actions: dataset.actions(),
            rewards: dataset.metric_values(metric),
            inverse_densities,
            kernel,
            metric,
            logged_propensity_count,
        })
    }

    /// Builds the objective from raw per-record arrays.
    pub fn from_parts(actions: Vec<f64>, rewards: Vec<f64>, densities: &[f64], kernel: KernelSpec, metric: Metric) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::EmptyInput);
        }
        for len in [rewards.len(), densities.len()] {
            if len != actions.len() {
                return Err(Error::LengthMismatch { expected: actions.len(), found: len });
            }
        }
        let inverse_densities = densities.iter().map(|q| 1.0 / q.max(PROPENSITY_FLOOR)).collect();
        Ok(Self { actions, rewards, inverse_densities, kernel, metric, logged_propensity_count: 0 })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn with_kernel(&self, kernel: KernelSpec) -> Self {
        Self { kernel, ..self.clone() }
    }

    fn check(&self, targets: &[f64]) -> Result<()> {
        if targets.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: targets.len() });
        }
        Ok(())
    }

    /// `K((target_i - t_i) / h) / Q_i`.
    fn kernel_weights(&self, targets: &[f64]) -> Vec<f64> {
        let h = self.kernel.bandwidth;
        targets
            .iter()
            .zip(&self.actions)
            .zip(&self.inverse_densities)
            .map(|((tau, t), iq)| self.kernel.kind.eval((tau - t) / h) * iq)
            .collect()
    }

    /// Per-record terms `K(u_i) y_i / (h Q_i)`; their mean is the estimate.
    pub fn terms(&self, targets: &[f64]) -> Result<Vec<f64>> {
        self.check(targets)?;
        let h = self.kernel.bandwidth;
        Ok(self.kernel_weights(targets).iter().zip(&self.rewards).map(|(w, y)| w * y / h).collect())
    }

    /// `(1/(n h)) sum K((target_i - t_i)/h) y_i / Q_i`.
    pub fn value(&self, targets: &[f64]) -> Result<f64> {
        let terms = self.terms(targets)?;
        Ok(terms.iter().sum::<f64>() / terms.len() as f64)
    }

    /// Partial derivatives of [`Self::value`] with respect to each target.
    pub fn gradient(&self, targets: &[f64]) -> Result<Vec<f64>> {
        self.check(targets)?;
        let h = self.kernel.bandwidth;
        let scale = 1.0 / (self.len() as f64 * h * h);
        targets
            .iter()
            .zip(&self.actions)
            .zip(self.inverse_densities.iter().zip(&self.rewards))
            .map(|((tau, t), (iq, y))| Ok(scale * self.kernel.kind.derivative((tau - t) / h)? * y * iq))
            .collect()
    }

    pub fn report(&self, targets: &[f64]) -> Result<EstimateReport> {
        let terms = self.terms(targets)?;
        Ok(EstimateReport {
            estimator_name: EstimatorKind::Continuous.name().to_string(),
            metric: self.metric.name().to_string(),
            value: terms.iter().sum::<f64>() / terms.len() as f64,
            std_error: terms_std_error(&terms),
            effective_sample_size: effective_sample_size(&self.kernel_weights(targets)),
            clipped_fraction: 0.0,
            n: self.len(),
            logged_propensity_count: self.logged_propensity_count,
        })
    }
}

fn evaluation_targets(input: &ContinuousOpeInput<'_>) -> Result<Vec<f64>> {
    let d = input.evaluation.dimension();
    // Dimension 0 marks a policy that ignores the context.
    if d != 0 {
        check_dimension(input.dataset.dimension(), d)?;
    }
    Ok(input.dataset.records().iter().map(|r| input.evaluation.payment(r.context.features())).collect())
}

/// Kernel-smoothed estimate of the evaluation policy's value.
pub fn continuous_estimate(input: &ContinuousOpeInput<'_>) -> Result<EstimateReport> {
    let targets = evaluation_targets(input)?;
    KernelObjective::new(input.dataset, input.behavior, input.kernel, input.metric)?.report(&targets)
}

/// Gradient of the kernel estimate with respect to the per-record
/// evaluation payments `targets`. Gaussian kernels only.
pub fn continuous_estimate_gradient(input: &ContinuousOpeInput<'_>, targets: &[f64]) -> Result<Vec<f64>> {
    KernelObjective::new(input.dataset, input.behavior, input.kernel, input.metric)?.gradient(targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::KernelKind;
    use crate::types::{Context, LoggedRecord, RewardVector, Side};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    struct Flat(f64);
    impl PaymentPolicy for Flat {
        fn dimension(&self) -> usize {
            0
        }
        fn payment(&self, _c: &[f64]) -> f64 {
            self.0
        }
    }

    fn one_record(action: f64, reward: f64, density: f64) -> LoggedDataset {
        let rewards = RewardVector { cost: 0.0, reach: 0.0, resources: 0.0, returns: reward };
        let r = LoggedRecord::new(Context::new(vec![0.0]).unwrap(), action, rewards, Some(density)).unwrap();
        LoggedDataset::new(vec![r], "t", Side::Control).unwrap()
    }

    fn input<'a>(d: &'a LoggedDataset, tau: &'a Flat, kernel: KernelSpec) -> ContinuousOpeInput<'a> {
        ContinuousOpeInput { dataset: d, evaluation: tau, behavior: DensitySource::Logged, kernel, metric: Metric::Returns }
    }

    #[test]
    fn single_record_gaussian_at_zero() {
        let d = one_record(1.3, 1.0, 1.0);
        let tau = Flat(1.3);
        let r = continuous_estimate(&input(&d, &tau, KernelSpec::gaussian(1.0).unwrap())).unwrap();
        assert!((r.value - crate::math::INV_SQRT_2PI).abs() < 1e-12);
        assert_eq!(r.logged_propensity_count, 1);
    }

    #[test]
    fn compact_kernel_outside_support_is_zero() {
        let d = one_record(1.0, 3.0, 0.5);
        let tau = Flat(2.5);
        let k = KernelSpec::new(KernelKind::Epanechnikov, 1.0).unwrap();
        assert_eq!(continuous_estimate(&input(&d, &tau, k)).unwrap().value, 0.0);
    }

    #[test]
    fn zero_rewards_give_zero() {
        let d = one_record(1.0, 0.0, 0.5);
        let tau = Flat(1.2);
        assert_eq!(continuous_estimate(&input(&d, &tau, KernelSpec::gaussian(0.3).unwrap())).unwrap().value, 0.0);
    }

    #[test]
    fn gradient_vanishes_at_logged_payment_and_needs_gaussian() {
        let d = one_record(1.0, 2.0, 0.5);
        let tau = Flat(1.0);
        let inp = input(&d, &tau, KernelSpec::gaussian(0.4).unwrap());
        assert_eq!(continuous_estimate_gradient(&inp, &[1.0]).unwrap(), vec![0.0]);
        let uniform = input(&d, &tau, KernelSpec::new(KernelKind::Uniform, 0.4).unwrap());
        assert!(matches!(continuous_estimate_gradient(&uniform, &[1.0]), Err(Error::NonDifferentiableKernel(_))));
    }

    #[test]
    fn densities_are_floored() {
        let obj = KernelObjective::from_parts(vec![0.0], vec![1.0], &[0.0], KernelSpec::gaussian(1.0).unwrap(), Metric::Cost).unwrap();
        assert!((obj.value(&[0.0]).unwrap() - crate::math::INV_SQRT_2PI / PROPENSITY_FLOOR).abs() < 1e-6);
    }

    fn random_objective(seed: u64, n: usize, kernel: KernelSpec) -> (KernelObjective, Vec<f64>) {
        let mut rng = crate::exec::stream_rng(seed, 0);
        let actions: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let densities: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        (KernelObjective::from_parts(actions, rewards, &densities, kernel, Metric::Cost).unwrap(), targets)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let h = 0.2 + 0.1 * seed as f64;
            let (obj, targets) = random_objective(seed, 50, KernelSpec::gaussian(h).unwrap());
            let g = obj.gradient(&targets).unwrap();
            let step = 1e-5;
            let fd: Vec<f64> = (0..targets.len())
                .map(|i| {
                    let mut up = targets.clone();
                    up[i] += step;
                    let mut down = targets.clone();
                    down[i] -= step;
                    (obj.value(&up).unwrap() - obj.value(&down).unwrap()) / (2.0 * step)
                })
                .collect();
            // Components far below the gradient's scale are dominated by
            // roundoff in the differenced sums, so the error is measured
            // relative to the largest component.
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let worst = fd.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(worst / scale < 1e-5, "seed {seed}: {worst} vs scale {scale}");
        }
    }

    proptest! {
        #[test]
        fn linear_in_rewards(seed in any::<u64>(), alpha in 0.0f64..10.0, h in 0.05f64..2.0) {
            for kind in KernelKind::ALL {
                let (obj, targets) = random_objective(seed, 30, KernelSpec::new(kind, h).unwrap());
                let scaled = KernelObjective { rewards: obj.rewards.iter().map(|r| alpha * r).collect(), ..obj.clone() };
                let v = obj.value(&targets).unwrap();
                let vs = scaled.value(&targets).unwrap();
                prop_assert!((vs - alpha * v).abs() <= 1e-9 * (1.0 + (alpha * v).abs()));
            }
        }

        #[test]
        fn ess_is_within_sample_size(seed in any::<u64>(), h in 0.05f64..2.0) {
            let (obj, targets) = random_objective(seed, 30, KernelSpec::gaussian(h).unwrap());
            let r = obj.report(&targets).unwrap();
            prop_assert!(r.effective_sample_size > 0.0 && r.effective_sample_size <= 30.0 + 1e-9);
        }
    }
}
