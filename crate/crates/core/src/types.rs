//! Logged-data model: contexts, reward vectors and datasets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Feature vector describing one auction opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("context feature {i} is not finite")));
        }
        Ok(Self(features))
    }

    pub fn features(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for Context {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Context> for Vec<f64> {
    fn from(c: Context) -> Self {
        c.0
    }
}

/// The four outcome metrics tracked per auction round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cost,
    Reach,
    Resources,
    Returns,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Cost, Metric::Reach, Metric::Resources, Metric::Returns];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cost => "cost",
            Metric::Reach => "reach",
            Metric::Resources => "resources",
            Metric::Returns => "returns",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one round: spend, reach, converted resources and returns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub cost: f64,
    pub reach: f64,
    pub resources: f64,
    pub returns: f64,
}

impl RewardVector {
    pub const ZERO: RewardVector = RewardVector { cost: 0.0, reach: 0.0, resources: 0.0, returns: 0.0 };

    pub fn new(cost: f64, reach: f64, resources: f64, returns: f64) -> Result<Self> {
        let r = Self { cost, reach, resources, returns };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for m in Metric::ALL {
            let v = self.get(m);
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("reward {m} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Cost => self.cost,
            Metric::Reach => self.reach,
            Metric::Resources => self.resources,
            Metric::Returns => self.returns,
        }
    }

    pub fn set(&mut self, metric: Metric, value: f64) {
        match metric {
            Metric::Cost => self.cost = value,
            Metric::Reach => self.reach = value,
            Metric::Resources => self.resources = value,
            Metric::Returns => self.returns = value,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Metric) -> f64) -> Self {
        let mut r = Self::ZERO;
        for m in Metric::ALL {
            r.set(m, f(m));
        }
        r
    }

    pub fn profit(&self) -> f64 {
        self.returns - self.cost
    }
}

/// One logged interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRecord {
    pub context: Context,
    /// Payment executed by the behavior policy.
    pub action: f64,
    pub rewards: RewardVector,
    /// Behavior probability (discrete) or density (continuous) of `action`, when known.
    pub logged_propensity: Option<f64>,
}

impl LoggedRecord {
    pub fn new(context: Context, action: f64, rewards: RewardVector, logged_propensity: Option<f64>) -> Result<Self> {
        let r = Self { context, action, rewards, logged_propensity };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.action.is_finite() || self.action < 0.0 {
            return Err(invalid(format!("action must be finite and non-negative, got {}", self.action)));
        }
        self.rewards.validate()?;
        if let Some(p) = self.logged_propensity {
            if !(p > 0.0) || !p.is_finite() {
                return Err(invalid(format!("logged propensity must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Control,
    Treatment,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Control => "control",
            Side::Treatment => "treatment",
        }
    }
}

/// Logged interactions from one side of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedDataset {
    records: Vec<LoggedRecord>,
    policy_id: String,
    side: Side,
    dimension: usize,
}

impl LoggedDataset {
    pub fn new(records: Vec<LoggedRecord>, policy_id: impl Into<String>, side: Side) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyInput)?;
        let dimension = first.context.dimension();
        if dimension == 0 {
            return Err(invalid("context dimension must be at least 1"));
        }
        for r in &records {
            if r.context.dimension() != dimension {
                return Err(Error::DimensionMismatch { expected: dimension, found: r.context.dimension() });
            }
            r.validate()?;
        }
        Ok(Self { records, policy_id: policy_id.into(), side, dimension })
    }

    pub fn records(&self) -> &[LoggedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn policy_id(&self) -> &str {
        &self.policy_id
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn actions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.action).collect()
    }

    pub fn metric_values(&self, metric: Metric) -> Vec<f64> {
        self.records.iter().map(|r| r.rewards.get(metric)).collect()
    }

    pub fn metric_mean(&self, metric: Metric) -> f64 {
        crate::math::mean(&self.metric_values(metric))
    }

    /// Per-record mean of every reward component.
    pub fn mean_rewards(&self) -> RewardVector {
        RewardVector::from_fn(|m| self.metric_mean(m))
    }

    /// Contexts as a row-major `n x d` matrix.
    pub fn context_matrix(&self) -> crate::models::Matrix {
        let mut data = Vec::with_capacity(self.len() * self.dimension);
        for r in &self.records {
            data.extend_from_slice(r.context.features());
        }
        crate::models::Matrix::new(data, self.len(), self.dimension).expect("consistent shape")
    }

    pub fn with_labels(mut self, policy_id: impl Into<String>, side: Side) -> Self {
        self.policy_id = policy_id.into();
        self.side = side;
        self
    }

    /// Sub-dataset made of the given record indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(records, self.policy_id.clone(), self.side)
    }
}
