//! Smoothing kernels on the real line.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::INV_SQRT_2PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Epanechnikov,
    Triangular,
    Uniform,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] =
        [KernelKind::Gaussian, KernelKind::Epanechnikov, KernelKind::Triangular, KernelKind::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Triangular => "triangular",
            KernelKind::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            KernelKind::Gaussian => INV_SQRT_2PI * libm::exp(-0.5 * u * u),
            KernelKind::Epanechnikov => {
                if a <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelKind::Triangular => {
                if a <= 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            KernelKind::Uniform => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// `ln K(u)`, `-inf` outside the support.
    pub fn ln_eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => libm::log(INV_SQRT_2PI) - 0.5 * u * u,
            _ => {
                let k = self.eval(u);
                if k > 0.0 {
                    libm::log(k)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `K'(u)`; only the Gaussian kernel is differentiable everywhere.
    pub fn derivative(self, u: f64) -> Result<f64> {
        match self {
            KernelKind::Gaussian => Ok(-u * self.eval(u)),
            other => Err(Error::NonDifferentiableKernel(other.name())),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A kernel together with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid(alloc::format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { kind, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, bandwidth)
    }

    /// `K((x - center) / h) / h`.
    pub fn scaled(&self, x: f64, center: f64) -> f64 {
        self.kind.eval((x - center) / self.bandwidth) / self.bandwidth
    }
}
