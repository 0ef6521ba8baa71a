//! Kernel and bandwidth search for the continuous estimator.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DensitySource, KernelObjective};
use crate::exec::{stream_rng, Executor};
use crate::models::{KernelKind, KernelSpec};
use crate::policy::{check_dimension, PaymentPolicy};
use crate::stats::mape;
use crate::types::{LoggedDataset, Metric};

/// `count` bandwidths log-spaced on `[10^log_min, 10^log_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    pub log_min: f64,
    pub log_max: f64,
    pub count: usize,
}

impl BandwidthGrid {
    /// Distance between neighboring grid points in `log10 h`.
    pub fn log_step(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.log_max - self.log_min) / (self.count - 1) as f64
        }
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        (0..self.count).map(|i| libm::pow(10.0, self.log_min + i as f64 * self.log_step())).collect()
    }
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub kernel_candidates: Vec<KernelKind>,
    pub bandwidth_grid: BandwidthGrid,
    /// Total trials: grid points first, the remainder refines the incumbent.
    pub budget: usize,
    pub rng_seed: u64,
}

impl Default for TuneConfig {
    /// Every kernel kind over `h` in `[10^-1.6, 1]`, 9 points, 48 trials.
    fn default() -> Self {
        Self {
            kernel_candidates: KernelKind::ALL.to_vec(),
            bandwidth_grid: BandwidthGrid { log_min: -1.6, log_max: 0.0, count: 9 },
            budget: 48,
            rng_seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.bandwidth_grid;
        if self.kernel_candidates.is_empty() || g.count == 0 {
            return Err(Error::EmptyGrid);
        }
        if !g.log_min.is_finite() || !g.log_max.is_finite() {
            return Err(Error::InvalidConfig("bandwidth grid bounds must be finite".into()));
        }
        if g.count >= 2 && g.log_min >= g.log_max {
            return Err(Error::InvalidConfig(alloc::format!("log_min {} must be below log_max {}", g.log_min, g.log_max)));
        }
        if g.count == 1 && g.log_min != g.log_max {
            return Err(Error::InvalidConfig("a one-point grid needs log_min == log_max".into()));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    Grid,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub kernel: KernelKind,
    pub bandwidth: f64,
    /// Percent.
    pub mape: f64,
    pub phase: TrialPhase,
}

impl Trial {
    /// Lower MAPE wins; equal MAPE goes to the larger bandwidth.
    fn beats(&self, other: &Trial) -> bool {
        self.mape < other.mape || (self.mape == other.mape && self.bandwidth > other.bandwidth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: KernelSpec,
    pub best_mape: f64,
    pub metric: Metric,
    pub trials: Vec<Trial>,
}

/// One tuning dataset: a kernel objective, the evaluation payments per
/// record, and the value the estimate should match.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneCase {
    pub objective: KernelObjective,
    pub targets: Vec<f64>,
    pub truth: f64,
}

impl TuneCase {
    pub fn new(
        dataset: &LoggedDataset,
        behavior: DensitySource<'_>,
        evaluation: &dyn PaymentPolicy,
        metric: Metric,
        truth: f64,
    ) -> Result<Self> {
        if !truth.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("oracle value {truth} is not finite")));
        }
        if evaluation.dimension() != 0 {
            check_dimension(dataset.dimension(), evaluation.dimension())?;
        }
        // Placeholder kernel; every trial substitutes its own.
        let objective = KernelObjective::new(dataset, behavior, KernelSpec::gaussian(1.0)?, metric)?;
        let targets = dataset.records().iter().map(|r| evaluation.payment(r.context.features())).collect();
        Ok(Self { objective, targets, truth })
    }
}

fn score(cases: &[TuneCase], kernel: KernelSpec) -> Result<f64> {
    let estimates = cases.iter().map(|c| c.objective.with_kernel(kernel).value(&c.targets)).collect::<Result<Vec<_>>>()?;
    let truths: Vec<f64> = cases.iter().map(|c| c.truth).collect();
    mape(&estimates, &truths)
}

/// Searches `(kernel, h)` for the lowest MAPE across `cases`.
///
/// Grid points are evaluated in bandwidth-major order until the budget runs
/// out; leftover trials sample `log10 h` uniformly within a window around
/// the incumbent, halving the window after every trial that fails to
/// improve on it.
pub fn tune_continuous<E: Executor>(cases: &[TuneCase], config: &TuneConfig, metric: Metric, exec: &E) -> Result<TuneOutcome> {
    config.validate()?;
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bandwidths = config.bandwidth_grid.bandwidths();
    let kinds = &config.kernel_candidates;
    let grid: Vec<(KernelKind, f64)> =
        bandwidths.iter().flat_map(|&h| kinds.iter().map(move |&k| (k, h))).take(config.budget).collect();
    let scored = exec.map_indexed(grid.len(), |i| {
        let (kind, h) = grid[i];
        Ok(Trial { kernel: kind, bandwidth: h, mape: score(cases, KernelSpec::new(kind, h)?)?, phase: TrialPhase::Grid })
    });
    let mut trials = scored.into_iter().collect::<Result<Vec<Trial>>>()?;
    let mut best = trials[0];
    for t in &trials[1..] {
        if t.beats(&best) {
            best = *t;
        }
    }
    let mut rng = stream_rng(config.rng_seed, 0);
    let mut window = config.bandwidth_grid.log_step().max(0.05);
    for _ in trials.len()..config.budget {
        let center = libm::log10(best.bandwidth);
        let h = libm::pow(10.0, center + rng.random_range(-window..=window));
        let t = Trial {
            kernel: best.kernel,
            bandwidth: h,
            mape: score(cases, KernelSpec::new(best.kernel, h)?)?,
            phase: TrialPhase::Refine,
        };
        trials.push(t);
        if t.beats(&best) {
            best = t;
        } else {
            window *= 0.5;
        }
    }
    Ok(TuneOutcome { best: KernelSpec::new(best.kernel, best.bandwidth)?, best_mape: best.mape, metric, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::exec::Sequential;
    use crate::math::normal_pdf;
    use rand_distr::{Distribution, StandardNormal};

    /// Logged payments `t ~ N(1, 0.5)` with reward `2 t`; the target pays
    /// 1.3 everywhere, so the true value is 2.6.
    fn case(seed: u64, n: usize) -> TuneCase {
        let mut rng = stream_rng(seed, 0);
        let actions: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.0 + 0.5 * z
            })
            .collect();
        let rewards = actions.iter().map(|t| 2.0 * t).collect();
        let densities: Vec<f64> = actions.iter().map(|t| normal_pdf((t - 1.0) / 0.5) / 0.5).collect();
        let objective =
            KernelObjective::from_parts(actions, rewards, &densities, KernelSpec::gaussian(1.0).unwrap(), Metric::Returns)
                .unwrap();
        TuneCase { objective, targets: vec![1.3; n], truth: 2.6 }
    }

    fn config(kinds: Vec<KernelKind>, log_min: f64, log_max: f64, count: usize, budget: usize) -> TuneConfig {
        TuneConfig { kernel_candidates: kinds, bandwidth_grid: BandwidthGrid { log_min, log_max, count }, budget, rng_seed: 3 }
    }

    #[test]
    fn singleton_grid_returns_its_candidate() {
        let cases = [case(1, 200)];
        let out = tune_continuous(&cases, &config(vec![KernelKind::Epanechnikov], -0.5, -0.5, 1, 1), Metric::Returns, &Sequential)
            .unwrap();
        assert_eq!(out.best.kind, KernelKind::Epanechnikov);
        assert!((out.best.bandwidth - libm::pow(10.0, -0.5)).abs() < 1e-15);
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn coarse_grid_lands_within_one_step_of_fine_grid_optimum() {
        let cases = [case(11, 2000), case(12, 2000), case(13, 2000)];
        let fine = config(vec![KernelKind::Gaussian], -2.0, 0.5, 501, 501);
        let fine_best = tune_continuous(&cases, &fine, Metric::Returns, &Sequential).unwrap().best.bandwidth;
        let coarse = config(vec![KernelKind::Gaussian], -2.0, 0.5, 11, 11);
        let out = tune_continuous(&cases, &coarse, Metric::Returns, &Sequential).unwrap();
        let step = coarse.bandwidth_grid.log_step();
        let gap = (libm::log10(out.best.bandwidth) - libm::log10(fine_best)).abs();
        assert!(gap <= step + 1e-12, "coarse {} vs fine {fine_best}", out.best.bandwidth);
    }

    #[test]
    fn ties_go_to_the_larger_bandwidth() {
        // Targets far outside every uniform-kernel window estimate 0 at both
        // bandwidths, so both trials score exactly 100%.
        let n = 10;
        let objective = KernelObjective::from_parts(
            vec![1.0; n],
            vec![1.0; n],
            &vec![1.0; n],
            KernelSpec::gaussian(1.0).unwrap(),
            Metric::Reach,
        )
        .unwrap();
        let cases = [TuneCase { objective, targets: vec![100.0; n], truth: 0.25 }];
        let out = tune_continuous(&cases, &config(vec![KernelKind::Uniform], 0.0, 1.0, 2, 2), Metric::Reach, &Sequential).unwrap();
        assert_eq!(out.trials[0].mape, out.trials[1].mape, "{:?}", out.trials);
        assert_eq!(out.best.bandwidth, 10.0);
    }

    #[test]
    fn refinement_is_seeded_and_never_worsens() {
        let cases = [case(2, 500)];
        let cfg = config(vec![KernelKind::Gaussian, KernelKind::Epanechnikov], -1.5, 0.0, 4, 20);
        let a = tune_continuous(&cases, &cfg, Metric::Returns, &Sequential).unwrap();
        let b = tune_continuous(&cases, &cfg, Metric::Returns, &Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.len(), 20);
        let grid_best = a.trials.iter().filter(|t| t.phase == TrialPhase::Grid).map(|t| t.mape).fold(f64::INFINITY, f64::min);
        assert!(a.best_mape <= grid_best);
        assert!(a.trials.iter().all(|t| t.mape >= a.best_mape));
    }

    #[test]
    fn invalid_configs() {
        let cases = [case(1, 50)];
        let empty = config(vec![], -1.0, 0.0, 3, 3);
        assert_eq!(tune_continuous(&cases, &empty, Metric::Returns, &Sequential), Err(Error::EmptyGrid));
        let reversed = config(vec![KernelKind::Gaussian], 0.0, -1.0, 3, 3);
        assert!(matches!(tune_continuous(&cases, &reversed, Metric::Returns, &Sequential), Err(Error::InvalidConfig(_))));
        let broke = config(vec![KernelKind::Gaussian], -1.0, 0.0, 3, 0);
        assert!(matches!(tune_continuous(&cases, &broke, Metric::Returns, &Sequential), Err(Error::InvalidConfig(_))));
    }
}
