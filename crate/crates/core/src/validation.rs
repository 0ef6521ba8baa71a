//! Statistical checks of estimator properties on the simulator, where the
//! behavior policy and the reward function are known exactly.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    dm, dr, ipw, snipw, BehaviorSource, DiscreteOpeInput, KernelObjective, RewardPredictions,
};
use crate::exec::{derive_seed, stream_rng, Executor};
use crate::learn::{initial_network, ProfitObjective};
use crate::math::{mean, sample_variance};
use crate::models::{KernelSpec, Matrix, MlpPolicy};
use crate::policy::FixedBins;
use crate::binning::BinningScheme;
use crate::sim::{expected_policy_value_with, expected_round_rewards, generate_log_with, presets, AuctionConfig, PolicySpec, PolicyValue, SoftmaxPolicy};
use crate::types::{LoggedDataset, LoggedRecord, Metric};

/// Known-propensity setting: softmax behavior and target over shared levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownPolicySetup {
    pub auction: AuctionConfig,
    pub behavior: SoftmaxPolicy,
    pub target: SoftmaxPolicy,
    pub oracle_contexts: usize,
    pub oracle_seed: u64,
}

impl Default for KnownPolicySetup {
    fn default() -> Self {
        Self {
            auction: presets::default_auction(),
            behavior: presets::softmax_behavior(),
            target: presets::softmax_target(),
            oracle_contexts: 200_000,
            oracle_seed: 0x0AC1E,
        }
    }
}

impl KnownPolicySetup {
    pub fn oracle<E: Executor>(&self, exec: &E) -> Result<PolicyValue> {
        let target = PolicySpec::softmax(self.target.clone());
        expected_policy_value_with(&self.auction, &target, self.oracle_contexts, self.oracle_seed, exec)
    }

    fn log<E: Executor>(&self, n: usize, seed: u64, exec: &E) -> Result<LoggedDataset> {
        generate_log_with(&self.auction, &PolicySpec::softmax(self.behavior.clone()), n, seed, exec)
    }

    fn input<'a>(&'a self, dataset: &'a LoggedDataset, binning: &'a BinningScheme, metric: Metric) -> DiscreteOpeInput<'a> {
        DiscreteOpeInput {
            dataset,
            binning,
            behavior: BehaviorSource::Logged,
            evaluation: &self.target,
            reward_model: None,
            clip_lambda: None,
            metric,
        }
    }

    /// `q(x, bin)`: the closed-form expected reward of the bin's level.
    fn exact_rewards(&self, dataset: &LoggedDataset, metric: Metric) -> RewardPredictions {
        let levels = &self.behavior.levels;
        RewardPredictions::from_fn(dataset.len(), levels.len(), |i, k| {
            expected_round_rewards(&self.auction, dataset.records()[i].context.features(), levels[k]).get(metric)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub metric: Metric,
    pub mean_estimate: f64,
    /// Standard error of the mean over replicates.
    pub std_error: f64,
    pub oracle: f64,
    pub oracle_std_error: f64,
    /// `|mean - oracle|` in combined standard errors.
    pub z: f64,
}

/// Mean IPW estimate of the target over `replicates` independent logs of
/// `n` records, per metric, against the oracle.
pub fn ipw_unbiasedness<E: Executor>(
    setup: &KnownPolicySetup,
    replicates: usize,
    n: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<BiasCheck>> {
    if replicates < 2 {
        return Err(Error::DegenerateSample(replicates));
    }
    let oracle = setup.oracle(exec)?;
    let binning = setup.behavior.binning();
    let per_replicate = exec.map_indexed(replicates, |r| -> Result<[f64; 4]> {
        let log = generate_log_with(
            &setup.auction,
            &PolicySpec::softmax(setup.behavior.clone()),
            n,
            derive_seed(seed, r as u64),
            &crate::exec::Sequential,
        )?;
        let mut out = [0.0; 4];
        for m in Metric::ALL {
            out[m.index()] = ipw(&setup.input(&log, &binning, m))?.value;
        }
        Ok(out)
    });
    let estimates = per_replicate.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Metric::ALL
        .iter()
        .map(|&m| {
            let values: Vec<f64> = estimates.iter().map(|e| e[m.index()]).collect();
            let mean_estimate = mean(&values);
            let std_error = libm::sqrt(sample_variance(&values) / values.len() as f64);
            let oracle_std_error = oracle.std_error.get(m);
            let z = (mean_estimate - oracle.get(m)).abs() / libm::hypot(std_error, oracle_std_error);
            BiasCheck { metric: m, mean_estimate, std_error, oracle: oracle.get(m), oracle_std_error, z }
        })
        .collect())
}

/// Mean absolute percentage error over seeds, per metric, of DR with each
/// model misspecified in turn, and of DM with an offset reward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleRobustness {
    /// `q = 0`, exact propensities.
    pub dr_zero_model: [f64; 4],
    /// Exact rewards, propensities scaled by `U(0.5, 2)` per record.
    pub dr_perturbed_propensities: [f64; 4],
    /// Exact rewards plus 0.5.
    pub dm_offset_model: [f64; 4],
    pub seeds: usize,
    pub n: usize,
}

/// Copy of `dataset` with every logged propensity multiplied by `U(0.5, 2)`.
pub fn perturb_propensities(dataset: &LoggedDataset, seed: u64) -> Result<LoggedDataset> {
    let mut rng = stream_rng(seed, 0);
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let factor = rng.random_range(0.5..=2.0);
            let p = r.logged_propensity.ok_or_else(|| Error::InvalidInput("record has no logged propensity".into()))?;
            LoggedRecord::new(r.context.clone(), r.action, r.rewards, Some(p * factor))
        })
        .collect::<Result<Vec<_>>>()?;
    LoggedDataset::new(records, dataset.policy_id(), dataset.side())
}

pub fn double_robustness<E: Executor>(
    setup: &KnownPolicySetup,
    seeds: usize,
    n: usize,
    seed: u64,
    exec: &E,
) -> Result<DoubleRobustness> {
    if seeds == 0 {
        return Err(Error::EmptyInput);
    }
    let oracle = setup.oracle(exec)?;
    let binning = setup.behavior.binning();
    let per_seed = exec.map_indexed(seeds, |s| -> Result<[[f64; 4]; 3]> {
        let s_seed = derive_seed(seed, s as u64);
        let log = setup.log(n, s_seed, &crate::exec::Sequential)?;
        let perturbed = perturb_propensities(&log, derive_seed(s_seed, 1))?;
        let zero = RewardPredictions::zeros(log.len(), binning.num_bins());
        let mut errors = [[0.0; 4]; 3];
        for m in Metric::ALL {
            let truth = oracle.get(m);
            let rel = |v: f64| 100.0 * (v - truth).abs() / truth.abs();
            let exact = setup.exact_rewards(&log, m);
            let offset = exact.map(|q| q + 0.5);
            let a = dr(&DiscreteOpeInput { reward_model: Some(&zero), ..setup.input(&log, &binning, m) })?;
            let b = dr(&DiscreteOpeInput { reward_model: Some(&exact), ..setup.input(&perturbed, &binning, m) })?;
            let c = dm(&DiscreteOpeInput { reward_model: Some(&offset), ..setup.input(&log, &binning, m) })?;
            errors[0][m.index()] = rel(a.value);
            errors[1][m.index()] = rel(b.value);
            errors[2][m.index()] = rel(c.value);
        }
        Ok(errors)
    });
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    let average = |k: usize| -> [f64; 4] {
        core::array::from_fn(|m| mean(&per_seed.iter().map(|e| e[k][m]).collect::<Vec<_>>()))
    };
    Ok(DoubleRobustness {
        dr_zero_model: average(0),
        dr_perturbed_propensities: average(1),
        dm_offset_model: average(2),
        seeds,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundedness {
    pub instances: usize,
    /// Instances whose weights were all zero, rejected by SNIPW by contract.
    pub all_zero: usize,
    /// Estimates outside `[min r, max r]`.
    pub violations: usize,
}

/// SNIPW on `instances` random logs with random policies over random bins,
/// random clipping, and rewards spanning several orders of magnitude.
pub fn snipw_boundedness(instances: usize, seed: u64) -> Result<Boundedness> {
    let mut out = Boundedness { instances, all_zero: 0, violations: 0 };
    let mut rng = stream_rng(seed, 0);
    for _ in 0..instances {
        let bins = rng.random_range(2..=8usize);
        let n = rng.random_range(1..=30usize);
        let edges: Vec<f64> = (0..=bins).map(|k| k as f64).collect();
        let binning = BinningScheme::from_edges(edges)?;
        let distribution = |rng: &mut rand_chacha::ChaCha8Rng, allow_zero: bool| -> Vec<f64> {
            let raw: Vec<f64> = (0..bins)
                .map(|_| if allow_zero && rng.random_bool(0.3) { 0.0 } else { rng.random_range(1e-3..1.0) })
                .collect();
            let total: f64 = raw.iter().sum();
            if total > 0.0 {
                raw.iter().map(|v| v / total).collect()
            } else {
                vec![1.0 / bins as f64; bins]
            }
        };
        let behavior = FixedBins(distribution(&mut rng, false));
        let evaluation = FixedBins(distribution(&mut rng, true));
        let scale = libm::pow(10.0, rng.random_range(-3.0..3.0));
        let records = (0..n)
            .map(|_| {
                let action = rng.random_range(0.0..bins as f64 - 1e-9);
                let reward = scale * rng.random_range(0.0..1.0);
                let rewards = crate::types::RewardVector::new(0.0, 0.0, 0.0, reward)?;
                LoggedRecord::new(crate::types::Context::new(vec![0.0])?, action, rewards, None)
            })
            .collect::<Result<Vec<_>>>()?;
        let dataset = LoggedDataset::new(records, "random", crate::types::Side::Control)?;
        let clip_lambda = if rng.random_bool(0.5) { Some(rng.random_range(0.1..20.0)) } else { None };
        let input = DiscreteOpeInput {
            dataset: &dataset,
            binning: &binning,
            behavior: BehaviorSource::Model(&behavior),
            evaluation: &evaluation,
            reward_model: None,
            clip_lambda,
            metric: Metric::Returns,
        };
        match snipw(&input) {
            Ok(report) => {
                let r = dataset.metric_values(Metric::Returns);
                let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(report.value >= lo && report.value <= hi) {
                    out.violations += 1;
                }
            }
            Err(Error::AllWeightsZero) => out.all_zero += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Largest finite-difference disagreements over the checked instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientFidelity {
    /// Worst per-layer relative error of the network backward pass.
    pub layer_error: f64,
    /// Worst relative error of the end-to-end profit-loss gradient.
    pub end_to_end_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ReLU kink lies within the step.
    pub skipped: usize,
}

const FD_STEP: f64 = 1e-6;

fn random_network(d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<MlpPolicy> {
    let mut mlp = MlpPolicy::zeros(d)?;
    let params: Vec<f64> = mlp.parameters().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    mlp.set_parameters(&params)?;
    Ok(mlp)
}

/// Central differences of `f` over every parameter of `mlp`, grouped by
/// layer. Parameters whose one-sided slopes disagree by more than
/// `kink_tolerance` straddle a ReLU kink and are skipped. Returns the
/// per-layer finite-difference vectors with `None` for skipped entries.
fn central_differences(
    mlp: &MlpPolicy,
    kink_tolerance: f64,
    mut f: impl FnMut(&MlpPolicy) -> Result<f64>,
) -> Result<Vec<Option<f64>>> {
    let base = mlp.parameters();
    let f0 = f(mlp)?;
    let mut probe = mlp.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + FD_STEP;
        probe.set_parameters(&p)?;
        let up = f(&probe)?;
        p[k] = base[k] - FD_STEP;
        probe.set_parameters(&p)?;
        let down = f(&probe)?;
        let (right, left) = ((up - f0) / FD_STEP, (f0 - down) / FD_STEP);
        out.push(if (right - left).abs() > kink_tolerance { None } else { Some((up - down) / (2.0 * FD_STEP)) });
    }
    Ok(out)
}

/// Splits a flat parameter vector into per-layer slices (weights then biases).
fn layer_ranges(mlp: &MlpPolicy) -> Vec<core::ops::Range<usize>> {
    let mut at = 0;
    mlp.layers()
        .iter()
        .map(|l| {
            let len = l.weights.len() + l.biases.len();
            at += len;
            at - len..at
        })
        .collect()
}

/// Max over `range` of `|analytic - fd|`, relative to the largest analytic
/// component in the range.
fn relative_error(analytic: &[f64], fd: &[Option<f64>], range: core::ops::Range<usize>, skipped: &mut usize, checked: &mut usize) -> f64 {
    let scale = analytic[range.clone()].iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let mut worst = 0.0f64;
    for k in range {
        match fd[k] {
            Some(v) => {
                *checked += 1;
                worst = worst.max((analytic[k] - v).abs() / scale);
            }
            None => *skipped += 1,
        }
    }
    worst
}

/// Checks `d`-dimensional random networks: the backward pass of one
/// forward evaluation per layer, and the full profit-loss gradient on a
/// random `n`-record kernel objective.
pub fn gradient_fidelity(instances: usize, d: usize, n: usize, seed: u64) -> Result<GradientFidelity> {
    let mut out = GradientFidelity { layer_error: 0.0, end_to_end_error: 0.0, checked: 0, skipped: 0 };
    for s in 0..instances {
        let mut rng = stream_rng(seed, s as u64);
        let mlp = random_network(d, &mut rng)?;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let upstream = rng.random_range(0.5..2.0);
        let analytic = mlp.backward(&x, upstream)?.flatten();
        let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let fd = central_differences(&mlp, 1e-3 * scale.max(1e-9), |m| Ok(upstream * m.forward(&x)?))?;
        for range in layer_ranges(&mlp) {
            out.layer_error = out.layer_error.max(relative_error(&analytic, &fd, range, &mut out.skipped, &mut out.checked));
        }

        let contexts = Matrix::new((0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(), n, d)?;
        let actions: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        let cost: Vec<f64> = actions.iter().map(|a| a * f64::from(rng.random_range(0..2u8))).collect();
        let returns: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let densities: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.5)).collect();
        let kernel = KernelSpec::gaussian(rng.random_range(0.2..0.6))?;
        let cost = KernelObjective::from_parts(actions.clone(), cost, &densities, kernel, Metric::Cost)?;
        let returns = KernelObjective::from_parts(actions, returns, &densities, kernel, Metric::Returns)?;
        let objective = ProfitObjective { contexts: &contexts, cost: &cost, returns: &returns };
        let net = initial_network(d, derive_seed(seed, s as u64), Some(rng.random_range(0.4..1.2)))?;
        let (_, grads) = objective.loss_and_gradient(&net, &crate::exec::Sequential)?;
        let analytic = grads.flatten();
        let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let fd = central_differences(&net, 1e-3 * scale.max(1e-9), |m| objective.loss(m, &crate::exec::Sequential))?;
        let all = 0..analytic.len();
        out.end_to_end_error = out.end_to_end_error.max(relative_error(&analytic, &fd, all, &mut out.skipped, &mut out.checked));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    fn quick() -> KnownPolicySetup {
        KnownPolicySetup { oracle_contexts: 20_000, ..KnownPolicySetup::default() }
    }

    #[test]
    fn ipw_mean_is_close_to_oracle_on_a_small_run() {
        let checks = ipw_unbiasedness(&quick(), 40, 500, 3, &Sequential).unwrap();
        assert_eq!(checks.len(), 4);
        for c in &checks {
            assert!(c.z < 5.0, "{c:?}");
        }
    }

    #[test]
    fn perturbation_keeps_records_and_scales_propensities() {
        let setup = quick();
        let log = setup.log(200, 1, &Sequential).unwrap();
        let p = perturb_propensities(&log, 2).unwrap();
        assert_eq!(p.len(), log.len());
        for (a, b) in log.records().iter().zip(p.records()) {
            let ratio = b.logged_propensity.unwrap() / a.logged_propensity.unwrap();
            assert!((0.5..=2.0).contains(&ratio));
            assert_eq!(a.rewards, b.rewards);
        }
    }

    #[test]
    fn dm_with_offset_model_is_far_off() {
        let r = double_robustness(&quick(), 2, 2000, 5, &Sequential).unwrap();
        assert!(r.dm_offset_model.iter().all(|e| *e > 5.0), "{r:?}");
    }

    #[test]
    fn boundedness_counts_every_instance() {
        let b = snipw_boundedness(2000, 9).unwrap();
        assert_eq!(b.violations, 0);
        assert!(b.all_zero < b.instances);
    }

    #[test]
    fn gradients_agree_on_a_few_instances() {
        let g = gradient_fidelity(3, 3, 20, 1).unwrap();
        assert!(g.layer_error < 1e-4 && g.end_to_end_error < 1e-3, "{g:?}");
        assert!(g.checked > g.skipped);
    }
}
