//! Versioned JSON model files: `{"kind": ..., "version": 1, "model": {...}}`.

use std::path::Path;

use ope_core::binning::BinningScheme;
use ope_core::learn::TuneOutcome;
use ope_core::models::{KdeDensity, KernelSpec, MlpPolicy, TreeEnsemble};
use ope_core::policy::{BehaviorDensity, BinPolicy, GaussianLoggingBins, GaussianLoggingDensity, OneHotBins, PaymentPolicy, ProxyPolicy};
use ope_core::sim::{PolicyKind, PolicySpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::error::{OpeError, Result};

pub const MODEL_VERSION: u32 = 1;

/// A model type with a stable on-disk kind tag.
pub trait Persisted: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl Persisted for TreeEnsemble {
    const KIND: &'static str = "tree_ensemble";
}
impl Persisted for ProxyPolicy {
    const KIND: &'static str = "proxy_policy";
}
impl Persisted for MlpPolicy {
    const KIND: &'static str = "mlp_policy";
}
impl Persisted for KdeDensity {
    const KIND: &'static str = "kde_density";
}
impl Persisted for PolicySpec {
    const KIND: &'static str = "policy_spec";
}
impl Persisted for TuneOutcome {
    const KIND: &'static str = "tuned_kernel";
}
impl Persisted for KernelSpec {
    const KIND: &'static str = "kernel_spec";
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    kind: &'static str,
    version: u32,
    model: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    kind: String,
    version: u32,
    model: serde_json::Value,
}

pub fn save_model<T: Persisted>(path: &Path, model: &T) -> Result<()> {
    write_json(path, &EnvelopeOut { kind: T::KIND, version: MODEL_VERSION, model })
}

fn read_envelope(path: &Path) -> Result<EnvelopeIn> {
    read_json(path)
}

fn decode<T: Persisted>(path: &Path, env: EnvelopeIn) -> Result<T> {
    if env.kind != T::KIND || env.version != MODEL_VERSION {
        return Err(OpeError::ModelKind {
            path: path.to_path_buf(),
            expected: T::KIND,
            version: MODEL_VERSION,
            found: format!("{} version {}", env.kind, env.version),
        });
    }
    serde_json::from_value(env.model)
        .map_err(|e| OpeError::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })
}

pub fn load_model<T: Persisted>(path: &Path) -> Result<T> {
    decode(path, read_envelope(path)?)
}

/// Any model file usable as a policy.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedPolicy {
    Proxy(ProxyPolicy),
    Mlp(MlpPolicy),
    Spec(PolicySpec),
    Regressor(TreeEnsemble),
}

impl LoadedPolicy {
    pub fn load(path: &Path) -> Result<Self> {
        let env = read_envelope(path)?;
        Ok(match env.kind.as_str() {
            k if k == ProxyPolicy::KIND => LoadedPolicy::Proxy(decode(path, env)?),
            k if k == MlpPolicy::KIND => LoadedPolicy::Mlp(decode(path, env)?),
            k if k == PolicySpec::KIND => LoadedPolicy::Spec(decode(path, env)?),
            k if k == TreeEnsemble::KIND => LoadedPolicy::Regressor(decode(path, env)?),
            other => {
                return Err(OpeError::ModelKind {
                    path: path.to_path_buf(),
                    expected: "policy",
                    version: MODEL_VERSION,
                    found: other.to_string(),
                })
            }
        })
    }

    /// The deterministic payment map.
    pub fn payment(&self) -> &dyn PaymentPolicy {
        match self {
            LoadedPolicy::Proxy(p) => &p.regressor,
            LoadedPolicy::Mlp(m) => m,
            LoadedPolicy::Spec(s) => s,
            LoadedPolicy::Regressor(t) => t,
        }
    }

    /// Binning the policy was fitted with, if any.
    pub fn binning(&self) -> Option<BinningScheme> {
        match self {
            LoadedPolicy::Proxy(p) => Some(p.binning.clone()),
            LoadedPolicy::Spec(PolicySpec { kind: PolicyKind::Softmax(s), .. }) => Some(s.binning()),
            _ => None,
        }
    }

    /// Discrete view over `binning`: a proxy's classifier when fitted on the
    /// same bins, the exact logging distribution of a noisy policy spec,
    /// otherwise all mass on the payment's bin.
    pub fn bins<'a>(&'a self, binning: &'a BinningScheme) -> Box<dyn BinPolicy + 'a> {
        match self {
            LoadedPolicy::Proxy(p) if p.binning == *binning => Box::new(&p.classifier),
            LoadedPolicy::Spec(PolicySpec { kind: PolicyKind::Softmax(s), .. }) if s.binning() == *binning => Box::new(s),
            LoadedPolicy::Spec(s) if s.noise_sd > 0.0 => {
                Box::new(GaussianLoggingBins { policy: s, noise_sd: s.noise_sd, binning })
            }
            _ => Box::new(OneHotBins { policy: self.payment(), binning }),
        }
    }

    /// Exact logging density, known only for noisy policy specs.
    pub fn density(&self) -> Option<Box<dyn BehaviorDensity + '_>> {
        match self {
            LoadedPolicy::Spec(s) if s.noise_sd > 0.0 && !matches!(s.kind, PolicyKind::Softmax(_)) => {
                Some(Box::new(GaussianLoggingDensity { policy: s, noise_sd: s.noise_sd }))
            }
            _ => None,
        }
    }
}
