//! Full-batch gradient descent of a payment network against the kernel
//! off-policy estimates of returns and cost.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::KernelObjective;
use crate::exec::{Executor, Sequential};
use crate::models::{KernelKind, Matrix, MlpGradients, MlpPolicy};

/// Records per gradient chunk; chunk boundaries fix the summation order.
const GRADIENT_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub window: usize,
    pub rel_tolerance: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self { window: 10, rel_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `-(returns - cost)`.
    Profit,
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptPalConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub convergence: Convergence,
    pub rng_seed: u64,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    /// Times the learning rate is halved when training ends above its starting loss.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_loss() -> LossKind {
    LossKind::Profit
}

fn default_retries() -> usize {
    5
}

impl Default for OptPalConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_iterations: 1000,
            convergence: Convergence::default(),
            rng_seed: 0,
            loss: LossKind::Profit,
            max_retries: default_retries(),
        }
    }
}

impl OptPalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.max_iterations == 0 || self.convergence.window == 0 {
            return Err(Error::InvalidConfig("max_iterations and window must be at least 1".into()));
        }
        if !(self.convergence.rel_tolerance > 0.0) {
            return Err(Error::InvalidConfig("rel_tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptPalOutcome {
    pub policy: MlpPolicy,
    /// Loss before every update, then the loss of the returned weights.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Learning-rate halvings performed by [`train_optpal_with_retries`].
    pub retries: usize,
    pub learning_rate: f64,
}

impl OptPalOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.trace.last().unwrap()
    }
}

/// The training objective: contexts plus the two kernel estimates.
pub struct ProfitObjective<'a> {
    pub contexts: &'a Matrix,
    pub cost: &'a KernelObjective,
    pub returns: &'a KernelObjective,
}

impl ProfitObjective<'_> {
    fn validate(&self, mlp: &MlpPolicy) -> Result<()> {
        for obj in [self.cost, self.returns] {
            if obj.kernel().kind != KernelKind::Gaussian {
                return Err(Error::NonDifferentiableKernel(obj.kernel().kind.name()));
            }
            if obj.len() != self.contexts.rows() {
                return Err(Error::LengthMismatch { expected: self.contexts.rows(), found: obj.len() });
            }
        }
        if mlp.input_dimension() != self.contexts.cols() {
            return Err(Error::DimensionMismatch { expected: self.contexts.cols(), found: mlp.input_dimension() });
        }
        Ok(())
    }

    fn payments<E: Executor>(&self, mlp: &MlpPolicy, exec: &E) -> Result<Vec<f64>> {
        let n = self.contexts.rows();
        let chunks = exec.map_indexed(n.div_ceil(GRADIENT_CHUNK), |c| {
            mlp.forward_rows(self.contexts, c * GRADIENT_CHUNK..((c + 1) * GRADIENT_CHUNK).min(n))
        });
        let mut out = Vec::with_capacity(n);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// `-(v_returns(P) - v_cost(P))` at payments `p`.
    pub fn loss_at(&self, p: &[f64]) -> Result<f64> {
        Ok(-(self.returns.value(p)? - self.cost.value(p)?))
    }

    pub fn loss<E: Executor>(&self, mlp: &MlpPolicy, exec: &E) -> Result<f64> {
        self.loss_at(&self.payments(mlp, exec)?)
    }

    /// Loss and its gradient with respect to every network parameter.
    pub fn loss_and_gradient<E: Executor>(&self, mlp: &MlpPolicy, exec: &E) -> Result<(f64, MlpGradients)> {
        let p = self.payments(mlp, exec)?;
        let loss = self.loss_at(&p)?;
        let gr = self.returns.gradient(&p)?;
        let gc = self.cost.gradient(&p)?;
        let upstream: Vec<f64> = gr.iter().zip(&gc).map(|(r, c)| -(r - c)).collect();
        let n = p.len();
        let parts = exec.map_indexed(n.div_ceil(GRADIENT_CHUNK), |c| {
            mlp.gradient_rows(self.contexts, c * GRADIENT_CHUNK..((c + 1) * GRADIENT_CHUNK).min(n), &upstream)
        });
        let mut total = MlpGradients::zeros_like(mlp);
        for part in parts {
            total.add_assign(&part?);
        }
        Ok((loss, total))
    }
}

fn converged(trace: &[f64], c: &Convergence) -> bool {
    if trace.len() <= c.window {
        return false;
    }
    let recent = &trace[trace.len() - c.window - 1..];
    recent.windows(2).all(|w| (w[1] - w[0]).abs() <= c.rel_tolerance * w[0].abs().max(f64::MIN_POSITIVE))
}

/// Plain full-batch gradient descent from `mlp`.
pub fn train_optpal<E: Executor>(
    objective: &ProfitObjective<'_>,
    mlp: MlpPolicy,
    config: &OptPalConfig,
    exec: &E,
) -> Result<OptPalOutcome> {
    config.validate()?;
    objective.validate(&mlp)?;
    let mut mlp = mlp;
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    let mut done = false;
    for _ in 0..config.max_iterations {
        let (loss, grads) = objective.loss_and_gradient(&mlp, exec)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(alloc::format!("loss became {loss}")));
        }
        trace.push(loss);
        if converged(&trace, &config.convergence) {
            done = true;
            break;
        }
        mlp.apply_gradient(&grads, config.learning_rate);
    }
    if !done {
        trace.push(objective.loss(&mlp, exec)?);
        done = converged(&trace, &config.convergence);
    }
    Ok(OptPalOutcome { policy: mlp, trace, converged: done, retries: 0, learning_rate: config.learning_rate })
}

/// [`train_optpal`], halving the learning rate and restarting from the same
/// initial weights while the final loss exceeds the initial loss.
pub fn train_optpal_with_retries<E: Executor>(
    objective: &ProfitObjective<'_>,
    mlp: MlpPolicy,
    config: &OptPalConfig,
    exec: &E,
) -> Result<OptPalOutcome> {
    let mut cfg = config.clone();
    let mut retries = 0;
    loop {
        let mut out = train_optpal(objective, mlp.clone(), &cfg, exec)?;
        out.retries = retries;
        if out.final_loss() <= out.initial_loss() || retries >= config.max_retries {
            return Ok(out);
        }
        retries += 1;
        cfg.learning_rate *= 0.5;
    }
}

/// Fresh network for `contexts`, Glorot-initialized from `seed`, with the
/// output bias set so that a zero hidden signal pays `initial_payment`.
pub fn initial_network(dimension: usize, seed: u64, initial_payment: Option<f64>) -> Result<MlpPolicy> {
    let mut mlp = MlpPolicy::new(dimension, seed)?;
    if let Some(p) = initial_payment {
        if !(p > 0.0) || !p.is_finite() {
            return Err(invalid(alloc::format!("initial payment must be positive, got {p}")));
        }
        mlp.set_output_bias(crate::math::softplus_inverse(p));
    }
    Ok(mlp)
}

pub fn train_optpal_sequential(objective: &ProfitObjective<'_>, mlp: MlpPolicy, config: &OptPalConfig) -> Result<OptPalOutcome> {
    train_optpal(objective, mlp, config, &Sequential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::KernelSpec;
    use crate::types::Metric;
    use rand::Rng;

    fn instance(seed: u64, n: usize, d: usize, h: f64) -> (Matrix, KernelObjective, KernelObjective) {
        let mut rng = crate::exec::stream_rng(seed, 0);
        let contexts = Matrix::new((0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(), n, d).unwrap();
        let actions: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        let cost = actions.iter().map(|a| a * f64::from(rng.random_range(0..2))).collect();
        let returns = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let densities: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.5)).collect();
        let k = KernelSpec::gaussian(h).unwrap();
        (
            contexts,
            KernelObjective::from_parts(actions.clone(), cost, &densities, k, Metric::Cost).unwrap(),
            KernelObjective::from_parts(actions, returns, &densities, k, Metric::Returns).unwrap(),
        )
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        for seed in 0..10u64 {
            let (x, c, r) = instance(seed, 20, 3, 0.3);
            let obj = ProfitObjective { contexts: &x, cost: &c, returns: &r };
            let mut mlp = initial_network(3, seed, None).unwrap();
            let mut rng = crate::exec::stream_rng(seed, 1);
            let random: Vec<f64> = mlp.parameters().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            mlp.set_parameters(&random).unwrap();
            let (base_loss, g) = obj.loss_and_gradient(&mlp, &Sequential).unwrap();
            let analytic = g.flatten();
            let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let base = mlp.parameters();
            let step = 1e-6;
            let mut m = mlp.clone();
            let mut checked = 0;
            for k in 0..base.len() {
                let mut p = base.clone();
                p[k] += step;
                m.set_parameters(&p).unwrap();
                let up = obj.loss(&m, &Sequential).unwrap();
                p[k] -= 2.0 * step;
                m.set_parameters(&p).unwrap();
                let down = obj.loss(&m, &Sequential).unwrap();
                // One-sided slopes disagree only when a ReLU kink lies within the step.
                let (right, left) = ((up - base_loss) / step, (base_loss - down) / step);
                if (right - left).abs() > 1e-3 * scale.max(1e-9) {
                    continue;
                }
                checked += 1;
                let fd = (up - down) / (2.0 * step);
                assert!((analytic[k] - fd).abs() <= 1e-3 * scale.max(1e-9), "seed {seed} param {k}: {} vs {fd}", analytic[k]);
            }
            assert!(checked * 2 >= base.len(), "seed {seed}: only {checked} smooth parameters");
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (x, c, r) = instance(1, 30, 3, 0.3);
        let obj = ProfitObjective { contexts: &x, cost: &c, returns: &r };
        let mlp = initial_network(3, 4, None).unwrap();
        let cfg = OptPalConfig { learning_rate: 0.0, max_iterations: 25, ..Default::default() };
        let out = train_optpal_sequential(&obj, mlp.clone(), &cfg).unwrap();
        assert_eq!(out.policy, mlp);
        assert!(out.trace.iter().all(|l| *l == out.trace[0]));
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let (x, c, r) = instance(2, 40, 3, 0.3);
        let obj = ProfitObjective { contexts: &x, cost: &c, returns: &r };
        let cfg = OptPalConfig { max_iterations: 50, ..Default::default() };
        let a = train_optpal_sequential(&obj, initial_network(3, 9, Some(0.9)).unwrap(), &cfg).unwrap();
        let b = train_optpal_sequential(&obj, initial_network(3, 9, Some(0.9)).unwrap(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.final_loss() <= a.initial_loss());
    }

    #[test]
    fn non_gaussian_kernel_rejected() {
        let (x, c, r) = instance(3, 10, 3, 0.3);
        let uniform = c.with_kernel(KernelSpec::new(KernelKind::Uniform, 0.3).unwrap());
        let obj = ProfitObjective { contexts: &x, cost: &uniform, returns: &r };
        let err = train_optpal_sequential(&obj, initial_network(3, 0, None).unwrap(), &OptPalConfig::default());
        assert!(matches!(err, Err(Error::NonDifferentiableKernel(_))));
        let obj = ProfitObjective { contexts: &x, cost: &c, returns: &r };
        let err = train_optpal_sequential(&obj, initial_network(4, 0, None).unwrap(), &OptPalConfig::default());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn retries_halve_an_oversized_step() {
        let (x, c, r) = instance(5, 40, 3, 0.1);
        let obj = ProfitObjective { contexts: &x, cost: &c, returns: &r };
        let cfg = OptPalConfig { learning_rate: 1e6, max_iterations: 20, max_retries: 40, ..Default::default() };
        let out = train_optpal_with_retries(&obj, initial_network(3, 1, Some(0.8)).unwrap(), &cfg, &Sequential).unwrap();
        assert!(out.retries > 0);
        assert!(out.final_loss() <= out.initial_loss());
        assert_eq!(out.learning_rate, 1e6 / f64::powi(2.0, out.retries as i32));
    }

    #[test]
    fn convergence_window() {
        let c = Convergence { window: 3, rel_tolerance: 1e-6 };
        assert!(!converged(&[1.0, 1.0, 1.0], &c));
        assert!(converged(&[1.0, 1.0, 1.0, 1.0], &c));
        assert!(!converged(&[1.0, 1.1, 1.1, 1.1], &c));
        assert!(converged(&[5.0, 1.0, 1.0, 1.0, 1.0], &c));
    }
}
