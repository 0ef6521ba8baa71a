//! End-to-end protocols over the simulated three-test scenario.
//!
//! Test-1 compares X (control) with Y, Test-2 compares X with Z and Test-3
//! compares Y with Z. Every protocol draws its logs from seeds derived from
//! one scenario seed, so a protocol run is a pure function of
//! `(ScenarioConfig, seed)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binning::make_binning;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_discrete, fit_reward_model_with, BehaviorSource, DensitySource, DiscreteOpeInput, EstimatorKind,
    EvaluationInputs, KernelObjective, MetricModels, RewardModelParams, RewardPredictions,
};
use crate::exec::{derive_seed, Executor};
use crate::learn::{
    counterfactual_test, initial_network, train_optpal_with_retries, tune_continuous,
    CounterfactualOutcome, OptPalConfig, OptPalOutcome, ProfitObjective, TuneCase, TuneConfig, TuneOutcome,
};
use crate::math::mean;
use crate::models::{ForestParams, KernelKind, KernelSpec};
use crate::policy::{fit_bin_proxy, GaussianLoggingBins, GaussianLoggingDensity, PaymentPolicy, ProxyPolicy};
use crate::sim::{
    expected_policy_value_with, presets, run_ab_test_with, AbTestOutcome, AuctionConfig, PolicySpec, PolicyValue,
    AB_TEST_ALPHA,
};
use crate::stats::{mape, LiftResult};
use crate::types::{LoggedDataset, Metric, Side};

// Stream tags for seeds derived from the scenario seed.
const STREAM_TEST1: u64 = 1;
const STREAM_TEST2: u64 = 2;
const STREAM_TEST3: u64 = 3;
const STREAM_TUNING: u64 = 10;
const STREAM_MODELS: u64 = 20;
const STREAM_PROXY: u64 = 30;
const STREAM_OPTPAL: u64 = 40;

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub auction: AuctionConfig,
    pub policy_x: PolicySpec,
    pub policy_y: PolicySpec,
    pub policy_z: PolicySpec,
    pub n_per_side: usize,
    pub num_bins: usize,
    pub clip_lambda: Option<f64>,
    pub reward_model: RewardModelParams,
    pub proxy_forest: ForestParams,
    pub tune: TuneConfig,
    /// Independent Test-1/Test-2 replicas pooled into the tuning objective.
    pub tuning_replicas: usize,
    /// Contexts averaged by the closed-form oracle.
    pub oracle_contexts: usize,
    pub oracle_seed: u64,
    pub optpal: OptPalConfig,
    /// Gaussian bandwidth of both OptPaL objectives.
    pub optpal_bandwidth: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            auction: presets::default_auction(),
            policy_x: presets::policy_x(),
            policy_y: presets::policy_y(),
            policy_z: presets::policy_z(),
            n_per_side: 20_000,
            num_bins: crate::binning::DEFAULT_NUM_BINS,
            clip_lambda: None,
            reward_model: RewardModelParams {
                forest: ForestParams { num_trees: 30, max_depth: 8, min_leaf: 10, ..ForestParams::default() },
                folds: 2,
            },
            proxy_forest: ForestParams { num_trees: 30, max_depth: 8, min_leaf: 10, ..ForestParams::default() },
            tune: TuneConfig::default(),
            tuning_replicas: 3,
            oracle_contexts: 100_000,
            oracle_seed: 0x5EED,
            optpal: OptPalConfig { learning_rate: 0.1, ..OptPalConfig::default() },
            optpal_bandwidth: 0.3,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.auction.validate()?;
        for p in [&self.policy_x, &self.policy_y, &self.policy_z] {
            p.validate(self.auction.dimension)?;
            if p.noise_sd <= 0.0 {
                return Err(Error::InvalidConfig("scenario policies must be logged with positive noise".into()));
            }
        }
        if self.n_per_side < 20 {
            return Err(Error::InvalidConfig(format!("n_per_side must be at least 20, got {}", self.n_per_side)));
        }
        if self.oracle_contexts < 1000 {
            return Err(Error::InvalidConfig("oracle_contexts must be at least 1000".into()));
        }
        if !(self.optpal_bandwidth > 0.0) {
            return Err(Error::InvalidConfig("optpal_bandwidth must be positive".into()));
        }
        if self.tuning_replicas == 0 {
            return Err(Error::InvalidConfig("tuning_replicas must be at least 1".into()));
        }
        self.tune.validate()?;
        self.optpal.validate()
    }

    fn policy(&self, name: PolicyName) -> &PolicySpec {
        match name {
            PolicyName::X => &self.policy_x,
            PolicyName::Y => &self.policy_y,
            PolicyName::Z => &self.policy_z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyName {
    X,
    Y,
    Z,
}

impl PolicyName {
    pub fn label(self) -> &'static str {
        match self {
            PolicyName::X => "X",
            PolicyName::Y => "Y",
            PolicyName::Z => "Z",
        }
    }
}

/// The three simulated A/B tests of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeTests {
    pub test1: AbTestOutcome,
    pub test2: AbTestOutcome,
    pub test3: AbTestOutcome,
}

fn ab_test<E: Executor>(
    cfg: &ScenarioConfig,
    control: PolicyName,
    treatment: PolicyName,
    seed: u64,
    exec: &E,
) -> Result<AbTestOutcome> {
    let mut out = run_ab_test_with(&cfg.auction, cfg.policy(control), cfg.policy(treatment), cfg.n_per_side, seed, exec)?;
    out.control = out.control.with_labels(control.label(), Side::Control);
    out.treatment = out.treatment.with_labels(treatment.label(), Side::Treatment);
    Ok(out)
}

pub fn simulate_tests<E: Executor>(cfg: &ScenarioConfig, seed: u64, exec: &E) -> Result<ThreeTests> {
    cfg.validate()?;
    Ok(ThreeTests {
        test1: ab_test(cfg, PolicyName::X, PolicyName::Y, derive_seed(seed, STREAM_TEST1), exec)?,
        test2: ab_test(cfg, PolicyName::X, PolicyName::Z, derive_seed(seed, STREAM_TEST2), exec)?,
        test3: ab_test(cfg, PolicyName::Y, PolicyName::Z, derive_seed(seed, STREAM_TEST3), exec)?,
    })
}

/// Closed-form oracle values of X, Y and Z executed without logging noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub x: PolicyValue,
    pub y: PolicyValue,
    pub z: PolicyValue,
}

impl OracleValues {
    pub fn get(&self, name: PolicyName) -> &PolicyValue {
        match name {
            PolicyName::X => &self.x,
            PolicyName::Y => &self.y,
            PolicyName::Z => &self.z,
        }
    }
}

pub fn oracle_values<E: Executor>(cfg: &ScenarioConfig, exec: &E) -> Result<OracleValues> {
    let value = |p: &PolicySpec| expected_policy_value_with(&cfg.auction, p, cfg.oracle_contexts, cfg.oracle_seed, exec);
    Ok(OracleValues { x: value(&cfg.policy_x)?, y: value(&cfg.policy_y)?, z: value(&cfg.policy_z)? })
}

/// One off-policy evaluation problem: a target policy on another policy's log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationTask {
    /// 1 or 2.
    pub test: u8,
    pub logging: PolicyName,
    pub target: PolicyName,
}

impl EvaluationTask {
    /// Each side of Test-1 and Test-2 evaluated on the other side's log.
    pub const ALL: [EvaluationTask; 4] = [
        EvaluationTask { test: 1, logging: PolicyName::X, target: PolicyName::Y },
        EvaluationTask { test: 1, logging: PolicyName::Y, target: PolicyName::X },
        EvaluationTask { test: 2, logging: PolicyName::X, target: PolicyName::Z },
        EvaluationTask { test: 2, logging: PolicyName::Z, target: PolicyName::X },
    ];

    pub fn name(&self) -> String {
        format!("test{}:{}-on-{}", self.test, self.target.label(), self.logging.label())
    }

    fn sides<'a>(&self, tests: &'a ThreeTests) -> (&'a LoggedDataset, &'a LoggedDataset) {
        let test = if self.test == 1 { &tests.test1 } else { &tests.test2 };
        if self.logging == PolicyName::X {
            (&test.control, &test.treatment)
        } else {
            (&test.treatment, &test.control)
        }
    }

    /// The log being reweighted.
    fn log<'a>(&self, tests: &'a ThreeTests) -> &'a LoggedDataset {
        self.sides(tests).0
    }

    /// The target's own log, used to fit its proxies.
    fn target_log<'a>(&self, tests: &'a ThreeTests) -> &'a LoggedDataset {
        self.sides(tests).1
    }
}

/// Kernel tuned per metric and kernel kind, indexed like [`Metric::ALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedKernels {
    pub per_metric: Vec<Vec<TuneOutcome>>,
}

impl TunedKernels {
    /// Tuned kernel of `kind` for `metric`.
    pub fn kernel(&self, metric: Metric, kind: KernelKind) -> Option<KernelSpec> {
        self.per_metric[metric.index()].iter().find(|t| t.best.kind == kind).map(|t| t.best)
    }

    /// Lowest-MAPE kernel of any kind for `metric`.
    pub fn best(&self, metric: Metric) -> KernelSpec {
        let mut best = &self.per_metric[metric.index()][0];
        for t in &self.per_metric[metric.index()][1..] {
            if t.best_mape < best.best_mape {
                best = t;
            }
        }
        best.best
    }
}

/// Tunes every kernel kind's bandwidth per metric on independent replicas
/// of Test-1 and Test-2 drawn from `seed`, scored against the oracle.
pub fn tune_kernels<E: Executor>(
    cfg: &ScenarioConfig,
    oracle: &OracleValues,
    seed: u64,
    exec: &E,
) -> Result<TunedKernels> {
    let replicas = (0..cfg.tuning_replicas)
        .map(|r| simulate_tests(cfg, derive_seed(derive_seed(seed, STREAM_TUNING), r as u64), exec))
        .collect::<Result<Vec<_>>>()?;
    let mut per_metric = Vec::with_capacity(4);
    for metric in Metric::ALL {
        let mut cases = Vec::with_capacity(replicas.len() * EvaluationTask::ALL.len());
        for replica in &replicas {
            for task in &EvaluationTask::ALL {
                let truth = oracle.get(task.target).get(metric);
                cases.push(TuneCase::new(task.log(replica), DensitySource::Logged, cfg.policy(task.target), metric, truth)?);
            }
        }
        let mut outcomes = Vec::with_capacity(cfg.tune.kernel_candidates.len());
        for &kind in &cfg.tune.kernel_candidates {
            let single = TuneConfig { kernel_candidates: alloc::vec![kind], ..cfg.tune.clone() };
            outcomes.push(tune_continuous(&cases, &single, metric, exec)?);
        }
        per_metric.push(outcomes);
    }
    Ok(TunedKernels { per_metric })
}

/// One estimate in the estimator comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub task: String,
    pub estimator: String,
    pub family: Family,
    pub metric: Metric,
    pub value: f64,
    pub std_error: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Discrete,
    Continuous,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Discrete => "discrete",
            Family::Continuous => "continuous",
        }
    }
}

/// Name of the continuous estimator using kernel `kind`.
pub fn continuous_name(kind: KernelKind) -> String {
    format!("continuous-{}", kind.name())
}

fn reward_models<E: Executor>(
    cfg: &ScenarioConfig,
    log: &LoggedDataset,
    binning: &crate::binning::BinningScheme,
    seed: u64,
    exec: &E,
) -> Result<Vec<RewardPredictions>> {
    Metric::ALL
        .iter()
        .map(|&m| {
            let params = RewardModelParams {
                forest: ForestParams { rng_seed: derive_seed(seed, m.index() as u64), ..cfg.reward_model.forest },
                ..cfg.reward_model.clone()
            };
            fit_reward_model_with(log, binning, m, &params, exec)
        })
        .collect()
}

/// Every discrete estimator and every tuned continuous estimator on every
/// evaluation task and metric, run through the proxy pipeline: the target
/// is known only through proxies fitted on its own log. Discrete estimators
/// take `pi_b` and `pi_e` from classifier proxies over the evaluated log's
/// bins; continuous estimators use the logged densities and the target's
/// regression proxy.
pub fn estimator_comparison<E: Executor>(
    cfg: &ScenarioConfig,
    tests: &ThreeTests,
    oracle: &OracleValues,
    kernels: &TunedKernels,
    seed: u64,
    exec: &E,
) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    for (t, task) in EvaluationTask::ALL.iter().enumerate() {
        let log = task.log(tests);
        let target_log = task.target_log(tests);
        let binning = make_binning(log, cfg.num_bins)?;
        let task_seed = derive_seed(seed, STREAM_MODELS + t as u64);
        let forest = |stream: u64| ForestParams { rng_seed: derive_seed(task_seed, stream), ..cfg.proxy_forest };
        let behavior = fit_bin_proxy(log, &binning, &forest(0), exec)?;
        let target = ProxyPolicy::fit(target_log, binning.clone(), &forest(1), exec)?;
        let models = reward_models(cfg, log, &binning, derive_seed(task_seed, 2), exec)?;
        let targets: Vec<f64> = log.records().iter().map(|r| target.regressor.payment(r.context.features())).collect();
        for metric in Metric::ALL {
            let truth = oracle.get(task.target).get(metric);
            let input = DiscreteOpeInput {
                dataset: log,
                binning: &binning,
                behavior: BehaviorSource::Model(&behavior),
                evaluation: &target.classifier,
                reward_model: Some(&models[metric.index()]),
                clip_lambda: cfg.clip_lambda,
                metric,
            };
            for (kind, est) in EstimatorKind::DISCRETE.iter().zip(estimate_discrete(&input, &EstimatorKind::DISCRETE)) {
                let est = est?;
                rows.push(EstimateRow {
                    task: task.name(),
                    estimator: kind.name().to_string(),
                    family: Family::Discrete,
                    metric,
                    value: est.report.value,
                    std_error: est.report.std_error,
                    truth,
                });
            }
            let objective = KernelObjective::new(log, DensitySource::Logged, KernelSpec::gaussian(1.0)?, metric)?;
            for &kind in &cfg.tune.kernel_candidates {
                let kernel = kernels.kernel(metric, kind).ok_or(Error::EmptyGrid)?;
                let report = objective.with_kernel(kernel).report(&targets)?;
                rows.push(EstimateRow {
                    task: task.name(),
                    estimator: continuous_name(kind),
                    family: Family::Continuous,
                    metric,
                    value: report.value,
                    std_error: report.std_error,
                    truth,
                });
            }
        }
    }
    Ok(rows)
}

/// MAPE of one estimator on one metric, aggregated over the evaluation tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeRow {
    pub family: Family,
    pub estimator: String,
    pub metric: Metric,
    pub mape: f64,
}

/// Best estimator of one family on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyBest {
    pub family: Family,
    pub metric: Metric,
    pub estimator: String,
    pub mape: f64,
    /// Mean MAPE over the family's estimators.
    pub mean_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeComparison {
    pub rows: Vec<MapeRow>,
    /// Discrete then continuous, each in [`Metric::ALL`] order.
    pub best: Vec<FamilyBest>,
}

impl MapeComparison {
    pub fn best_of(&self, family: Family, metric: Metric) -> &FamilyBest {
        self.best.iter().find(|b| b.family == family && b.metric == metric).expect("every family and metric present")
    }

    /// Metrics on which the best continuous estimator beats the best discrete one.
    pub fn continuous_wins(&self) -> usize {
        Metric::ALL
            .iter()
            .filter(|&&m| self.best_of(Family::Continuous, m).mape < self.best_of(Family::Discrete, m).mape)
            .count()
    }
}

pub fn mape_comparison(rows: &[EstimateRow]) -> Result<MapeComparison> {
    let mut out = Vec::new();
    let mut keys: Vec<(Family, String)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(f, e)| *f == r.family && *e == r.estimator) {
            keys.push((r.family, r.estimator.clone()));
        }
    }
    for (family, estimator) in &keys {
        for metric in Metric::ALL {
            let (est, truth): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.family == *family && r.estimator == *estimator && r.metric == metric)
                .map(|r| (r.value, r.truth))
                .unzip();
            out.push(MapeRow { family: *family, estimator: estimator.clone(), metric, mape: mape(&est, &truth)? });
        }
    }
    let mut best = Vec::new();
    for family in [Family::Discrete, Family::Continuous] {
        for metric in Metric::ALL {
            let candidates: Vec<&MapeRow> = out.iter().filter(|r| r.family == family && r.metric == metric).collect();
            let Some(first) = candidates.first() else {
                return Err(Error::EmptyInput);
            };
            let winner = candidates.iter().fold(*first, |a, b| if b.mape < a.mape { b } else { a });
            best.push(FamilyBest {
                family,
                metric,
                estimator: winner.estimator.clone(),
                mape: winner.mape,
                mean_mape: mean(&candidates.iter().map(|r| r.mape).collect::<Vec<_>>()),
            });
        }
    }
    Ok(MapeComparison { rows: out, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteVsContinuous {
    pub kernels: TunedKernels,
    pub estimates: Vec<EstimateRow>,
    pub comparison: MapeComparison,
}

pub fn discrete_vs_continuous<E: Executor>(cfg: &ScenarioConfig, seed: u64, exec: &E) -> Result<DiscreteVsContinuous> {
    let oracle = oracle_values(cfg, exec)?;
    let tests = simulate_tests(cfg, seed, exec)?;
    let kernels = tune_kernels(cfg, &oracle, seed, exec)?;
    let estimates = estimator_comparison(cfg, &tests, &oracle, &kernels, seed, exec)?;
    let comparison = mape_comparison(&estimates)?;
    Ok(DiscreteVsContinuous { kernels, estimates, comparison })
}

/// Estimated Y-vs-Z lifts next to the lifts observed in Test-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualYz {
    pub continuous: CounterfactualOutcome,
    pub sndr: CounterfactualOutcome,
    pub actual: Vec<LiftResult>,
}

impl CounterfactualYz {
    fn agreement(estimated: &CounterfactualOutcome, actual: &[LiftResult]) -> usize {
        estimated.lifts.iter().zip(actual).filter(|(e, a)| e.lift_percent.signum() == a.lift_percent.signum()).count()
    }

    pub fn continuous_agreement(&self) -> usize {
        Self::agreement(&self.continuous, &self.actual)
    }

    pub fn sndr_agreement(&self) -> usize {
        Self::agreement(&self.sndr, &self.actual)
    }
}

/// Fits proxy Y' on Y's Test-1 log, puts it in place of X in Test-2 and
/// compares the resulting Z-vs-Y' lifts with Test-3.
pub fn counterfactual_yz<E: Executor>(
    cfg: &ScenarioConfig,
    tests: &ThreeTests,
    kernels: &TunedKernels,
    seed: u64,
    exec: &E,
) -> Result<CounterfactualYz> {
    let y_log = &tests.test1.treatment;
    let proxy_binning = make_binning(y_log, cfg.num_bins)?;
    let forest = ForestParams { rng_seed: derive_seed(seed, STREAM_PROXY), ..cfg.proxy_forest };
    let proxy = ProxyPolicy::fit(y_log, proxy_binning, &forest, exec)?;

    let x_log = &tests.test2.control;
    let x = &cfg.policy_x;
    let binning = proxy.binning.clone();
    let behavior_bins = GaussianLoggingBins { policy: x, noise_sd: x.noise_sd, binning: &binning };
    let behavior_density = GaussianLoggingDensity { policy: x, noise_sd: x.noise_sd };
    let models = reward_models(cfg, x_log, &binning, derive_seed(seed, STREAM_PROXY + 1), exec)?;
    let metrics: [MetricModels<'_>; 4] =
        core::array::from_fn(|m| MetricModels { reward_model: Some(&models[m]), kernel: kernels.best(Metric::ALL[m]) });
    let inputs = EvaluationInputs {
        binning: &binning,
        behavior_bins: BehaviorSource::Model(&behavior_bins),
        evaluation_bins: &proxy.classifier,
        behavior_density: DensitySource::Model(&behavior_density),
        evaluation_payment: &proxy.regressor,
        metrics,
        clip_lambda: cfg.clip_lambda,
    };
    let run = |kind| counterfactual_test(x_log, &tests.test2.treatment, Side::Control, kind, &inputs, AB_TEST_ALPHA);
    Ok(CounterfactualYz {
        continuous: run(EstimatorKind::Continuous)?,
        sndr: run(EstimatorKind::Sndr)?,
        actual: tests.test3.lifts.clone(),
    })
}

/// Trained policy W next to the logging policy X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptPalReport {
    pub outcome: OptPalOutcome,
    pub learned_oracle: PolicyValue,
    pub behavior_oracle: PolicyValue,
    /// Kernel estimates of returns minus cost on the training log.
    pub learned_estimated_profit: f64,
    pub behavior_estimated_profit: f64,
}

/// Trains W on X's Test-2 log and scores W and X with the oracle.
pub fn optpal_experiment<E: Executor>(cfg: &ScenarioConfig, tests: &ThreeTests, seed: u64, exec: &E) -> Result<OptPalReport> {
    let log = &tests.test2.control;
    let kernel = KernelSpec::gaussian(cfg.optpal_bandwidth)?;
    let cost = KernelObjective::new(log, DensitySource::Logged, kernel, Metric::Cost)?;
    let returns = KernelObjective::new(log, DensitySource::Logged, kernel, Metric::Returns)?;
    let contexts = log.context_matrix();
    let objective = ProfitObjective { contexts: &contexts, cost: &cost, returns: &returns };
    let start = mean(&log.actions());
    let mlp = initial_network(log.dimension(), derive_seed(seed, STREAM_OPTPAL), Some(start))?;
    let config = OptPalConfig { rng_seed: derive_seed(seed, STREAM_OPTPAL), ..cfg.optpal.clone() };
    let outcome = train_optpal_with_retries(&objective, mlp, &config, exec)?;

    let behavior_targets: Vec<f64> = log.records().iter().map(|r| cfg.policy_x.payment(r.context.features())).collect();
    let behavior_estimated_profit = -objective.loss_at(&behavior_targets)?;
    let learned_estimated_profit = -outcome.final_loss();
    let w = PolicySpec::mlp(outcome.policy.clone());
    let learned_oracle = expected_policy_value_with(&cfg.auction, &w, cfg.oracle_contexts, cfg.oracle_seed, exec)?;
    let behavior_oracle = expected_policy_value_with(&cfg.auction, &cfg.policy_x, cfg.oracle_contexts, cfg.oracle_seed, exec)?;
    Ok(OptPalReport { outcome, learned_oracle, behavior_oracle, learned_estimated_profit, behavior_estimated_profit })
}
