//! TOML input documents. Missing keys fall back to the scenario defaults.

use std::fs;
use std::path::Path;

use ope_core::experiments::ScenarioConfig;
use ope_core::learn::OptPalConfig;
use ope_core::sim::{presets, AuctionConfig, PolicySpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))
}

/// [`read_toml`] when a path is given, the type's default otherwise.
pub fn read_toml_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map(read_toml).unwrap_or_else(|| Ok(T::default()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| OpeError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    pub control: PolicySpec,
    pub treatment: PolicySpec,
}

/// `[auction]`, `[policy.control]` and `[policy.treatment]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub auction: AuctionConfig,
    pub policy: PolicyPair,
    /// Contexts averaged by the closed-form oracle written next to the logs.
    pub oracle_contexts: usize,
}

impl Default for SimulateConfig {
    /// Test-1 of the scenario: X against Y.
    fn default() -> Self {
        Self {
            auction: presets::default_auction(),
            policy: PolicyPair { control: presets::policy_x(), treatment: presets::policy_y() },
            oracle_contexts: 100_000,
        }
    }
}

/// `learn-optimal` settings: the optimizer plus the kernel bandwidth of both
/// objectives and the starting payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub optpal: OptPalConfig,
    pub bandwidth: f64,
    /// Defaults to the mean logged payment.
    pub initial_payment: Option<f64>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self { optpal: s.optpal, bandwidth: s.optpal_bandwidth, initial_payment: None }
    }
}
