//! Product-kernel density estimate of the behavior policy's payment given
//! the context.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{KernelKind, Matrix, PROPENSITY_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::math::{sample_variance, sqrt};
use crate::types::LoggedDataset;

/// Per-column rule-of-thumb bandwidths `1.06 * sd * n^(-1/5)`.
///
/// Constant columns get [`PROPENSITY_FLOOR`].
pub fn silverman_bandwidths(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let factor = 1.06 * libm::pow(n, -0.2);
    (0..x.cols())
        .map(|j| {
            let sd = sqrt(sample_variance(&x.column(j)));
            if sd > 0.0 {
                factor * sd
            } else {
                PROPENSITY_FLOOR
            }
        })
        .collect()
}

/// Joint KDE over `(context, action)` rows; the action is the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeDensity {
    points: Matrix,
    bandwidths: Vec<f64>,
    kernel: KernelKind,
}

impl KdeDensity {
    pub fn new(points: Matrix, bandwidths: Vec<f64>, kernel: KernelKind) -> Result<Self> {
        if points.rows() < 2 {
            return Err(invalid("KDE needs at least 2 training points"));
        }
        if bandwidths.len() != points.cols() {
            return Err(Error::LengthMismatch { expected: points.cols(), found: bandwidths.len() });
        }
        if let Some(h) = bandwidths.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
            return Err(invalid(format!("KDE bandwidths must be positive, got {h}")));
        }
        Ok(Self { points, bandwidths, kernel })
    }

    /// Fits on the dataset's `(context, action)` pairs with Silverman bandwidths.
    pub fn fit(dataset: &LoggedDataset, kernel: KernelKind) -> Result<Self> {
        let points = dataset.context_matrix().with_column(&dataset.actions())?;
        let bandwidths = silverman_bandwidths(&points);
        Self::new(points, bandwidths, kernel)
    }

    pub fn with_action_bandwidth(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {h}")));
        }
        *self.bandwidths.last_mut().unwrap() = h;
        Ok(self)
    }

    pub fn context_dimension(&self) -> usize {
        self.points.cols() - 1
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    /// `p(action | context)`, floored at [`PROPENSITY_FLOOR`].
    pub fn conditional_density(&self, context: &[f64], action: f64) -> Result<f64> {
        let d = self.context_dimension();
        if context.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: context.len() });
        }
        let h_action = self.bandwidths[d];
        let mut log_weights = Vec::with_capacity(self.points.rows());
        let mut max_lw = f64::NEG_INFINITY;
        for i in 0..self.points.rows() {
            let row = self.points.row(i);
            let mut lw = 0.0;
            for k in 0..d {
                lw += self.kernel.ln_eval((context[k] - row[k]) / self.bandwidths[k]);
                if lw == f64::NEG_INFINITY {
                    break;
                }
            }
            max_lw = max_lw.max(lw);
            log_weights.push(lw);
        }
        if max_lw == f64::NEG_INFINITY {
            return Ok(PROPENSITY_FLOOR);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, lw) in log_weights.into_iter().enumerate() {
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let w = libm::exp(lw - max_lw);
            den += w;
            num += w * self.kernel.eval((action - self.points.get(i, d)) / h_action) / h_action;
        }
        Ok((num / den).max(PROPENSITY_FLOOR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_point() -> KdeDensity {
        let points = Matrix::new(vec![0.0, 0.0, 0.0, 10.0], 2, 2).unwrap();
        KdeDensity::new(points, vec![1.0, 1.0], KernelKind::Gaussian).unwrap()
    }

    #[test]
    fn two_point_mixture_closed_form() {
        let kde = two_point();
        let at0 = kde.conditional_density(&[0.0], 0.0).unwrap();
        let at5 = kde.conditional_density(&[0.0], 5.0).unwrap();
        // Equal-weight mixture of N(0,1) and N(10,1).
        let phi = |z: f64| crate::math::normal_pdf(z);
        assert!((at0 - 0.5 * (phi(0.0) + phi(10.0))).abs() < 1e-15);
        assert!((at5 - phi(5.0)).abs() < 1e-15);
        assert!(at0 / at5 > 100.0);
    }

    #[test]
    fn integrates_to_one_over_action_axis() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut data = Vec::new();
        for _ in 0..60 {
            let x: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            data.extend_from_slice(&[x, 2.0 + x + 0.3 * e]);
        }
        let points = Matrix::new(data, 60, 2).unwrap();
        for kernel in KernelKind::ALL {
            let bw = silverman_bandwidths(&points);
            let kde = KdeDensity::new(points.clone(), bw.clone(), kernel).unwrap();
            let actions = points.column(1);
            let lo = actions.iter().cloned().fold(f64::INFINITY, f64::min) - 5.0 * bw[1];
            let hi = actions.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 5.0 * bw[1];
            let steps = 20_000;
            let dx = (hi - lo) / steps as f64;
            let total: f64 = (0..steps)
                .map(|i| kde.conditional_density(&[0.3], lo + (i as f64 + 0.5) * dx).unwrap() - PROPENSITY_FLOOR)
                .sum::<f64>()
                * dx;
            assert!((total - 1.0).abs() < 0.01, "{kernel}: {total}");
        }
    }

    #[test]
    fn floored_far_from_data() {
        let kde = two_point();
        assert_eq!(kde.conditional_density(&[0.0], 1e4).unwrap(), PROPENSITY_FLOOR);
        let compact = KdeDensity::new(Matrix::new(vec![0.0, 0.0, 0.0, 1.0], 2, 2).unwrap(), vec![1.0, 1.0], KernelKind::Uniform).unwrap();
        assert_eq!(compact.conditional_density(&[50.0], 0.5).unwrap(), PROPENSITY_FLOOR);
    }

    #[test]
    fn invariant_under_training_set_duplication() {
        let base = vec![0.0, 1.0, 1.0, 2.5, -0.5, 0.7];
        let once = KdeDensity::new(Matrix::new(base.clone(), 3, 2).unwrap(), vec![0.6, 0.4], KernelKind::Gaussian).unwrap();
        let mut doubled = base.clone();
        doubled.extend_from_slice(&base);
        let twice = KdeDensity::new(Matrix::new(doubled, 6, 2).unwrap(), vec![0.6, 0.4], KernelKind::Gaussian).unwrap();
        for &(x, a) in &[(0.0, 1.0), (0.5, 2.0), (-1.0, 0.0)] {
            let p1 = once.conditional_density(&[x], a).unwrap();
            let p2 = twice.conditional_density(&[x], a).unwrap();
            assert!((p1 - p2).abs() <= 1e-12 * p1);
        }
    }

    #[test]
    fn silverman_rule() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let col: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = Matrix::new(col.clone(), n, 1).unwrap();
        let h = silverman_bandwidths(&m)[0];
        let expected = 1.06 * libm::pow(10.0, -0.8);
        assert!((h / expected - 1.0).abs() < 0.1, "{h} vs {expected}");

        let scaled = Matrix::new(col.iter().map(|v| 3.5 * v).collect(), n, 1).unwrap();
        let hs = silverman_bandwidths(&scaled)[0];
        assert!((hs / h - 3.5).abs() < 1e-9);

        let constant = Matrix::new(vec![2.0; 10], 10, 1).unwrap();
        assert_eq!(silverman_bandwidths(&constant), vec![PROPENSITY_FLOOR]);
    }

    #[test]
    fn dimension_checked() {
        assert!(matches!(two_point().conditional_density(&[0.0, 1.0], 0.0), Err(Error::DimensionMismatch { .. })));
    }
}
