//! Single-slot first-price auction against a lognormal rival bid.
//!
//! Winning costs the agent its own payment and yields one unit of reach, a
//! Poisson number of converted resources and a per-resource return. Every
//! record and every oracle draw uses its own RNG stream, so logs and oracle
//! values do not depend on thread count or scheduling.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binning::BinningScheme;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, stream_rng, Executor, Sequential};
use crate::math::{dot, normal_cdf, normal_pdf, softplus, sqrt};
use crate::models::{MlpPolicy, TreeEnsemble};
use crate::policy::{BinPolicy, PaymentPolicy};
use crate::stats::{lift_with_ci, LiftResult};
use crate::types::{Context, LoggedDataset, LoggedRecord, Metric, RewardVector, Side};

/// Log-scale standard deviation of the rival bid.
pub const RIVAL_LOG_SD: f64 = 0.5;

/// Records per oracle shard; shard boundaries fix the summation order.
const ORACLE_SHARD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextDistribution {
    /// Independent `N(0, 1)` features.
    StandardNormal,
    /// Independent `U(0, 1)` features.
    UniformUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionConfig {
    pub dimension: usize,
    pub context_seed_distribution: ContextDistribution,
    /// Median of the rival bid.
    pub competitor_scale: f64,
    pub conversion_weights: Vec<f64>,
    #[serde(default)]
    pub conversion_intercept: f64,
    pub value_weights: Vec<f64>,
    #[serde(default)]
    pub value_intercept: f64,
    /// Standard deviation of the per-round value noise.
    pub noise_sd: f64,
    pub rng_seed: u64,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(config_error("dimension must be at least 1"));
        }
        for (name, w) in [("conversion_weights", &self.conversion_weights), ("value_weights", &self.value_weights)] {
            if w.len() != self.dimension {
                return Err(config_error(format!("{name} has length {}, expected {}", w.len(), self.dimension)));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(config_error(format!("{name} must be finite")));
            }
        }
        if !(self.competitor_scale > 0.0) || !self.competitor_scale.is_finite() {
            return Err(config_error("competitor_scale must be positive"));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(config_error("noise_sd must be non-negative"));
        }
        if !self.conversion_intercept.is_finite() || !self.value_intercept.is_finite() {
            return Err(config_error("intercepts must be finite"));
        }
        Ok(())
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.context_seed_distribution {
            ContextDistribution::StandardNormal => (0..self.dimension).map(|_| StandardNormal.sample(rng)).collect(),
            ContextDistribution::UniformUnit => (0..self.dimension).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Poisson mean of converted resources on a win.
    pub fn conversion_rate(&self, context: &[f64]) -> f64 {
        softplus(self.conversion_intercept + dot(&self.conversion_weights, context))
    }

    /// Noise-free return per converted resource, before truncation at zero.
    pub fn unit_value(&self, context: &[f64]) -> f64 {
        self.value_intercept + dot(&self.value_weights, context)
    }

    /// `P(rival bid < payment)`.
    pub fn win_probability(&self, payment: f64) -> f64 {
        if payment <= 0.0 {
            return 0.0;
        }
        normal_cdf((libm::log(payment) - libm::log(self.competitor_scale)) / RIVAL_LOG_SD)
    }
}

/// Plays one round. The rival draw is always consumed; the conversion and
/// value draws only on a win.
pub fn simulate_round<R: Rng + ?Sized>(config: &AuctionConfig, context: &[f64], payment: f64, rng: &mut R) -> RewardVector {
    let z: f64 = StandardNormal.sample(rng);
    let rival = config.competitor_scale * libm::exp(RIVAL_LOG_SD * z);
    if !(payment > rival) {
        return RewardVector::ZERO;
    }
    let rate = config.conversion_rate(context);
    let resources = match Poisson::new(rate) {
        Ok(p) => p.sample(rng),
        Err(_) => 0.0,
    };
    let noise: f64 = if config.noise_sd > 0.0 {
        let e: f64 = StandardNormal.sample(rng);
        config.noise_sd * e
    } else {
        0.0
    };
    let unit = (config.unit_value(context) + noise).max(0.0);
    RewardVector { cost: payment, reach: 1.0, resources, returns: resources * unit }
}

/// Closed-form expectation of [`simulate_round`] for a fixed context and payment.
pub fn expected_round_rewards(config: &AuctionConfig, context: &[f64], payment: f64) -> RewardVector {
    let win = config.win_probability(payment);
    let rate = config.conversion_rate(context);
    let v = config.unit_value(context);
    let s = config.noise_sd;
    // E[max(0, v + s e)] for standard normal e.
    let unit = if s > 0.0 { v * normal_cdf(v / s) + s * normal_pdf(v / s) } else { v.max(0.0) };
    RewardVector { cost: payment * win, reach: win, resources: win * rate, returns: win * rate * unit }
}

/// Stochastic policy over a fixed set of payment levels with softmax
/// probabilities `softmax(weights[k] . x + intercepts[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    /// Strictly increasing, non-negative payment levels.
    pub levels: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        let k = self.levels.len();
        if k < 2 {
            return Err(config_error("softmax policy needs at least 2 levels"));
        }
        if self.levels.windows(2).any(|w| !(w[0] < w[1])) || !(self.levels[0] >= 0.0) || !self.levels[k - 1].is_finite() {
            return Err(config_error("softmax levels must be finite, non-negative and strictly increasing"));
        }
        if self.weights.len() != k || self.intercepts.len() != k {
            return Err(config_error("softmax weights and intercepts need one entry per level"));
        }
        if self.weights.iter().any(|w| w.len() != dimension) {
            return Err(config_error(format!("softmax weight rows must have length {dimension}")));
        }
        Ok(())
    }

    pub fn probabilities(&self, context: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.weights.iter().zip(&self.intercepts).map(|(w, b)| b + dot(w, context)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    /// Draws a level index and returns it with its probability.
    pub fn sample<R: Rng + ?Sized>(&self, context: &[f64], rng: &mut R) -> (usize, f64) {
        let p = self.probabilities(context);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return (k, *pk);
            }
        }
        let last = p.len() - 1;
        (last, p[last])
    }

    /// Bins with one level each, cut at the midpoints between levels.
    pub fn binning(&self) -> BinningScheme {
        let l = &self.levels;
        let k = l.len();
        let mut edges = Vec::with_capacity(k + 1);
        edges.push((l[0] - 0.5 * (l[1] - l[0])).max(0.0).min(0.5 * l[0]));
        for w in l.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(l[k - 1] + 0.5 * (l[k - 1] - l[k - 2]));
        BinningScheme::from_edges(edges).expect("levels are strictly increasing")
    }

    pub fn mean_payment(&self, context: &[f64]) -> f64 {
        self.probabilities(context).iter().zip(&self.levels).map(|(p, l)| p * l).sum()
    }
}

impl BinPolicy for SoftmaxPolicy {
    fn num_bins(&self) -> usize {
        self.levels.len()
    }
    fn bin_probabilities(&self, context: &[f64]) -> Vec<f64> {
        self.probabilities(context)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyKind {
    /// `max(floor, weights . x + intercept)`.
    Linear { weights: Vec<f64>, intercept: f64, #[serde(default)] floor: f64 },
    Constant { payment: f64 },
    Mlp { network: MlpPolicy },
    /// Regression proxy of a logged policy.
    Proxy { model: TreeEnsemble },
    Softmax(SoftmaxPolicy),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Linear { .. } => "linear",
            PolicyKind::Constant { .. } => "constant",
            PolicyKind::Mlp { .. } => "mlp",
            PolicyKind::Proxy { .. } => "proxy",
            PolicyKind::Softmax(_) => "softmax",
        }
    }
}

/// A payment policy plus the Gaussian randomization applied when logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default)]
    pub noise_sd: f64,
}

impl PolicySpec {
    pub fn linear(weights: Vec<f64>, intercept: f64, floor: f64, noise_sd: f64) -> Self {
        Self { kind: PolicyKind::Linear { weights, intercept, floor }, noise_sd }
    }

    pub fn constant(payment: f64) -> Self {
        Self { kind: PolicyKind::Constant { payment }, noise_sd: 0.0 }
    }

    pub fn mlp(network: MlpPolicy) -> Self {
        Self { kind: PolicyKind::Mlp { network }, noise_sd: 0.0 }
    }

    pub fn proxy(model: TreeEnsemble) -> Self {
        Self { kind: PolicyKind::Proxy { model }, noise_sd: 0.0 }
    }

    pub fn softmax(policy: SoftmaxPolicy) -> Self {
        Self { kind: PolicyKind::Softmax(policy), noise_sd: 0.0 }
    }

    pub fn with_noise(mut self, noise_sd: f64) -> Self {
        self.noise_sd = noise_sd;
        self
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(config_error("policy noise_sd must be non-negative"));
        }
        let dim_err = |found: usize| config_error(format!("policy expects dimension {found}, auction has {dimension}"));
        match &self.kind {
            PolicyKind::Linear { weights, intercept, floor } => {
                if weights.len() != dimension {
                    return Err(dim_err(weights.len()));
                }
                if !intercept.is_finite() || !(*floor >= 0.0) || !floor.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(config_error("linear policy needs finite weights and a non-negative floor"));
                }
            }
            PolicyKind::Constant { payment } => {
                if !(*payment >= 0.0) || !payment.is_finite() {
                    return Err(config_error("constant payment must be finite and non-negative"));
                }
            }
            PolicyKind::Mlp { network } => {
                if network.input_dimension() != dimension {
                    return Err(dim_err(network.input_dimension()));
                }
            }
            PolicyKind::Proxy { model } => {
                if model.feature_dimension() != dimension {
                    return Err(dim_err(model.feature_dimension()));
                }
                if model.mode() != crate::models::ForestMode::Regression {
                    return Err(config_error("proxy payment policies must be regression forests"));
                }
            }
            PolicyKind::Softmax(p) => {
                p.validate(dimension)?;
                if self.noise_sd > 0.0 {
                    return Err(config_error("softmax policies are already stochastic; noise_sd must be 0"));
                }
            }
        }
        Ok(())
    }

    /// Deterministic payment; the expected level for softmax policies.
    pub fn payment(&self, context: &[f64]) -> f64 {
        let p = match &self.kind {
            PolicyKind::Linear { weights, intercept, floor } => (intercept + dot(weights, context)).max(*floor),
            PolicyKind::Constant { payment } => *payment,
            PolicyKind::Mlp { network } => network.forward(context).expect("dimension validated"),
            PolicyKind::Proxy { model } => model.predict(context).expect("dimension validated"),
            PolicyKind::Softmax(p) => p.mean_payment(context),
        };
        p.max(0.0)
    }

    /// Executes the policy. With `logging`, Gaussian noise is added and the
    /// probability or density of the executed payment is returned.
    pub fn act<R: Rng + ?Sized>(&self, context: &[f64], logging: bool, rng: &mut R) -> (f64, Option<f64>) {
        if let PolicyKind::Softmax(p) = &self.kind {
            let (k, prob) = p.sample(context, rng);
            return (p.levels[k], Some(prob));
        }
        let mu = self.payment(context);
        if !logging || self.noise_sd == 0.0 {
            return (mu, None);
        }
        let e: f64 = StandardNormal.sample(rng);
        let action = (mu + self.noise_sd * e).max(0.0);
        let density = normal_pdf((action - mu) / self.noise_sd) / self.noise_sd;
        (action, Some(density.max(f64::MIN_POSITIVE)))
    }
}

impl PaymentPolicy for PolicySpec {
    fn dimension(&self) -> usize {
        match &self.kind {
            PolicyKind::Linear { weights, .. } => weights.len(),
            PolicyKind::Mlp { network } => network.input_dimension(),
            PolicyKind::Proxy { model } => model.feature_dimension(),
            PolicyKind::Softmax(p) => p.weights[0].len(),
            PolicyKind::Constant { .. } => 0,
        }
    }
    fn payment(&self, context: &[f64]) -> f64 {
        PolicySpec::payment(self, context)
    }
}

pub fn generate_log(config: &AuctionConfig, policy: &PolicySpec, n: usize, rng_seed: u64) -> Result<LoggedDataset> {
    generate_log_with(config, policy, n, rng_seed, &Sequential)
}

/// `n` i.i.d. rounds under `policy` with logging noise. Record `i` draws from
/// RNG stream `i` of `rng_seed`.
pub fn generate_log_with<E: Executor>(
    config: &AuctionConfig,
    policy: &PolicySpec,
    n: usize,
    rng_seed: u64,
    exec: &E,
) -> Result<LoggedDataset> {
    config.validate()?;
    policy.validate(config.dimension)?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let records = exec.map_indexed(n, |i| {
        let mut rng = stream_rng(rng_seed, i as u64);
        let x = config.sample_context(&mut rng);
        let (action, propensity) = policy.act(&x, true, &mut rng);
        let rewards = simulate_round(config, &x, action, &mut rng);
        LoggedRecord { context: Context::new(x).expect("sampled contexts are finite"), action, rewards, logged_propensity: propensity }
    });
    LoggedDataset::new(records, policy.kind.name(), Side::Control)
}

/// Oracle value of a policy: per-round means with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub mean: RewardVector,
    pub std_error: RewardVector,
    pub profit: f64,
    pub profit_std_error: f64,
    pub n: usize,
}

impl PolicyValue {
    pub fn get(&self, metric: Metric) -> f64 {
        self.mean.get(metric)
    }
}

// Running mean and sum of squared deviations for cost, reach, resources,
// returns and profit.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: [f64; 5],
    m2: [f64; 5],
}

impl Moments {
    fn push(&mut self, r: &RewardVector) {
        let v = [r.cost, r.reach, r.resources, r.returns, r.returns - r.cost];
        self.n += 1.0;
        for ((x, mean), m2) in v.iter().zip(&mut self.mean).zip(&mut self.m2) {
            let delta = x - *mean;
            *mean += delta / self.n;
            *m2 += delta * (x - *mean);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for k in 0..5 {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.n / n;
            self.m2[k] += other.m2[k] + delta * delta * self.n * other.n / n;
        }
        self.n = n;
    }

    fn into_value(self) -> PolicyValue {
        let se = |k: usize| if self.n > 1.0 { sqrt(self.m2[k] / (self.n - 1.0) / self.n) } else { 0.0 };
        PolicyValue {
            mean: RewardVector { cost: self.mean[0], reach: self.mean[1], resources: self.mean[2], returns: self.mean[3] },
            std_error: RewardVector { cost: se(0), reach: se(1), resources: se(2), returns: se(3) },
            profit: self.mean[4],
            profit_std_error: se(4),
            n: self.n as usize,
        }
    }
}

fn sharded<E, F>(n: usize, exec: &E, draw: F) -> PolicyValue
where
    E: Executor,
    F: Fn(usize) -> RewardVector + Sync + Send,
{
    let shards = n.div_ceil(ORACLE_SHARD);
    let parts = exec.map_indexed(shards, |s| {
        let mut m = Moments::default();
        for i in s * ORACLE_SHARD..((s + 1) * ORACLE_SHARD).min(n) {
            m.push(&draw(i));
        }
        m
    });
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total.into_value()
}

pub fn true_policy_value(config: &AuctionConfig, policy: &PolicySpec, n_mc: usize, rng_seed: u64) -> Result<PolicyValue> {
    true_policy_value_with(config, policy, n_mc, rng_seed, &Sequential)
}

/// Monte-Carlo value of `policy` executed without logging noise.
pub fn true_policy_value_with<E: Executor>(
    config: &AuctionConfig,
    policy: &PolicySpec,
    n_mc: usize,
    rng_seed: u64,
    exec: &E,
) -> Result<PolicyValue> {
    config.validate()?;
    policy.validate(config.dimension)?;
    if n_mc < 1000 {
        return Err(Error::InvalidInput(format!("n_mc must be at least 1000, got {n_mc}")));
    }
    Ok(sharded(n_mc, exec, |i| {
        let mut rng = stream_rng(rng_seed, i as u64);
        let x = config.sample_context(&mut rng);
        let (payment, _) = policy.act(&x, false, &mut rng);
        simulate_round(config, &x, payment, &mut rng)
    }))
}

/// Value of `policy` averaging the closed-form round expectation over
/// `n_contexts` sampled contexts. Far less noisy than [`true_policy_value`]
/// since only the context is random.
pub fn expected_policy_value_with<E: Executor>(
    config: &AuctionConfig,
    policy: &PolicySpec,
    n_contexts: usize,
    rng_seed: u64,
    exec: &E,
) -> Result<PolicyValue> {
    config.validate()?;
    policy.validate(config.dimension)?;
    if n_contexts < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 contexts, got {n_contexts}")));
    }
    Ok(sharded(n_contexts, exec, |i| {
        let mut rng = stream_rng(rng_seed, i as u64);
        let x = config.sample_context(&mut rng);
        match &policy.kind {
            PolicyKind::Softmax(p) => {
                let probs = p.probabilities(&x);
                RewardVector::from_fn(|m| {
                    probs.iter().zip(&p.levels).map(|(pk, l)| pk * expected_round_rewards(config, &x, *l).get(m)).sum()
                })
            }
            _ => expected_round_rewards(config, &x, policy.payment(&x)),
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbTestOutcome {
    pub control: LoggedDataset,
    pub treatment: LoggedDataset,
    /// One lift per metric, in [`Metric::ALL`] order.
    pub lifts: Vec<LiftResult>,
}

/// Significance level of every simulated A/B test.
pub const AB_TEST_ALPHA: f64 = 0.05;

pub fn run_ab_test(
    config: &AuctionConfig,
    control: &PolicySpec,
    treatment: &PolicySpec,
    n_per_side: usize,
    rng_seed: u64,
) -> Result<AbTestOutcome> {
    run_ab_test_with(config, control, treatment, n_per_side, rng_seed, &Sequential)
}

/// Logs both sides on independent context streams and compares them.
pub fn run_ab_test_with<E: Executor>(
    config: &AuctionConfig,
    control: &PolicySpec,
    treatment: &PolicySpec,
    n_per_side: usize,
    rng_seed: u64,
    exec: &E,
) -> Result<AbTestOutcome> {
    if n_per_side < 2 {
        return Err(Error::DegenerateSample(n_per_side));
    }
    let control_log = generate_log_with(config, control, n_per_side, derive_seed(rng_seed, 0), exec)?
        .with_labels(control.kind.name(), Side::Control);
    let treatment_log = generate_log_with(config, treatment, n_per_side, derive_seed(rng_seed, 1), exec)?
        .with_labels(treatment.kind.name(), Side::Treatment);
    let lifts = ab_lifts(&treatment_log, &control_log)?;
    Ok(AbTestOutcome { control: control_log, treatment: treatment_log, lifts })
}

/// Observed lifts of `treatment` over `control` for every metric.
pub fn ab_lifts(treatment: &LoggedDataset, control: &LoggedDataset) -> Result<Vec<LiftResult>> {
    Metric::ALL
        .iter()
        .map(|&m| lift_with_ci(m, &treatment.metric_values(m), &control.metric_values(m), AB_TEST_ALPHA))
        .collect()
}

/// Default environment and the three logged policies of the three-test
/// scenario: X is the incumbent, Y a flat bidder, Z a context-aware bidder.
pub mod presets {
    use super::*;

    pub const DIMENSION: usize = 6;
    pub const LOGGING_NOISE_SD: f64 = 0.35;
    pub const PAYMENT_FLOOR: f64 = 0.05;

    fn padded(head: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; DIMENSION];
        v[..head.len()].copy_from_slice(head);
        v
    }

    pub fn default_auction() -> AuctionConfig {
        AuctionConfig {
            dimension: DIMENSION,
            context_seed_distribution: ContextDistribution::StandardNormal,
            competitor_scale: 1.0,
            conversion_weights: padded(&[0.8, 0.0, 0.4]),
            conversion_intercept: 0.3,
            value_weights: padded(&[0.5, 0.6]),
            value_intercept: 1.2,
            noise_sd: 0.5,
            rng_seed: 0,
        }
    }

    pub fn policy_x() -> PolicySpec {
        PolicySpec::linear(padded(&[0.1, 0.1]), 1.0, PAYMENT_FLOOR, LOGGING_NOISE_SD)
    }

    pub fn policy_y() -> PolicySpec {
        PolicySpec::linear(padded(&[]), 1.2, PAYMENT_FLOOR, LOGGING_NOISE_SD)
    }

    pub fn policy_z() -> PolicySpec {
        PolicySpec::linear(padded(&[0.45, 0.35, 0.2]), 0.95, PAYMENT_FLOOR, LOGGING_NOISE_SD)
    }

    /// Levels shared by the discrete stochastic policies below.
    pub const SOFTMAX_LEVELS: [f64; 5] = [0.4, 0.8, 1.2, 1.6, 2.0];

    /// Discrete behavior policy with mild context dependence.
    pub fn softmax_behavior() -> SoftmaxPolicy {
        SoftmaxPolicy {
            levels: SOFTMAX_LEVELS.to_vec(),
            weights: (0..5).map(|k| padded(&[0.3 * (k as f64 - 2.0)])).collect(),
            intercepts: vec![0.0; 5],
        }
    }

    /// Discrete evaluation policy that bids more on valuable contexts.
    pub fn softmax_target() -> SoftmaxPolicy {
        SoftmaxPolicy {
            levels: SOFTMAX_LEVELS.to_vec(),
            weights: (0..5).map(|k| padded(&[0.6 * (k as f64 - 2.0), 0.4 * (k as f64 - 2.0)])).collect(),
            intercepts: vec![-0.5, 0.0, 0.3, 0.0, -0.5],
        }
    }
}
