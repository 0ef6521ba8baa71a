//! Policy abstractions shared by the estimators.
//!
//! A [`PaymentPolicy`] is a deterministic context-to-payment map (the
//! continuous view); a [`BinPolicy`] is a distribution over payment bins (the
//! discrete view); a [`BehaviorDensity`] gives the behavior policy's density
//! of a logged payment.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binning::BinningScheme;
use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::math::normal_cdf;
use crate::models::{ForestMode, ForestParams, KdeDensity, MlpPolicy, TreeEnsemble};
use crate::types::LoggedDataset;

pub trait PaymentPolicy: Sync {
    /// Context dimension, or 0 for policies that ignore the context.
    fn dimension(&self) -> usize;
    /// Finite, non-negative payment for `context`.
    fn payment(&self, context: &[f64]) -> f64;
}

pub trait BinPolicy: Sync {
    fn num_bins(&self) -> usize;
    /// Probability vector over bins, summing to one.
    fn bin_probabilities(&self, context: &[f64]) -> Vec<f64>;
}

pub trait BehaviorDensity: Sync {
    fn density(&self, context: &[f64], action: f64) -> f64;
}

impl<T: PaymentPolicy + ?Sized> PaymentPolicy for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn payment(&self, context: &[f64]) -> f64 {
        (**self).payment(context)
    }
}

impl<T: BinPolicy + ?Sized> BinPolicy for &T {
    fn num_bins(&self) -> usize {
        (**self).num_bins()
    }
    fn bin_probabilities(&self, context: &[f64]) -> Vec<f64> {
        (**self).bin_probabilities(context)
    }
}

impl PaymentPolicy for MlpPolicy {
    fn dimension(&self) -> usize {
        self.input_dimension()
    }
    fn payment(&self, context: &[f64]) -> f64 {
        self.forward(context).expect("context dimension checked by caller")
    }
}

/// Regression forests act as payment policies, classification forests as bin policies.
impl PaymentPolicy for TreeEnsemble {
    fn dimension(&self) -> usize {
        self.feature_dimension()
    }
    fn payment(&self, context: &[f64]) -> f64 {
        self.predict(context).expect("regression forest with matching dimension").max(0.0)
    }
}

impl BinPolicy for TreeEnsemble {
    fn num_bins(&self) -> usize {
        self.num_classes()
    }
    fn bin_probabilities(&self, context: &[f64]) -> Vec<f64> {
        self.predict_proba(context).expect("classification forest with matching dimension")
    }
}

impl BehaviorDensity for KdeDensity {
    fn density(&self, context: &[f64], action: f64) -> f64 {
        self.conditional_density(context, action).expect("context dimension checked by caller")
    }
}

/// Output of a proxy model for one context.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxyPrediction {
    Payment(f64),
    Bins(Vec<f64>),
}

pub fn predict_proxy_policy(ensemble: &TreeEnsemble, context: &[f64]) -> Result<ProxyPrediction> {
    match ensemble.mode() {
        ForestMode::Regression => Ok(ProxyPrediction::Payment(ensemble.predict(context)?.max(0.0))),
        ForestMode::Classification => Ok(ProxyPrediction::Bins(ensemble.predict_proba(context)?)),
    }
}

/// Regression proxy of the logged context-to-payment map.
pub fn fit_payment_proxy<E: Executor>(dataset: &LoggedDataset, params: &ForestParams, exec: &E) -> Result<TreeEnsemble> {
    TreeEnsemble::fit_regressor_with(&dataset.context_matrix(), &dataset.actions(), params, exec)
}

/// Classification proxy predicting the bin of the logged payment.
pub fn fit_bin_proxy<E: Executor>(
    dataset: &LoggedDataset,
    binning: &BinningScheme,
    params: &ForestParams,
    exec: &E,
) -> Result<TreeEnsemble> {
    let labels: Vec<usize> = dataset.records().iter().map(|r| binning.bin_of(r.action)).collect();
    TreeEnsemble::fit_classifier_with(&dataset.context_matrix(), &labels, binning.num_bins(), params, exec)
}

/// Regression and classification proxies of one logged policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPolicy {
    pub binning: BinningScheme,
    pub regressor: TreeEnsemble,
    pub classifier: TreeEnsemble,
}

impl ProxyPolicy {
    pub fn fit<E: Executor>(dataset: &LoggedDataset, binning: BinningScheme, params: &ForestParams, exec: &E) -> Result<Self> {
        let regressor = fit_payment_proxy(dataset, params, exec)?;
        let classifier = fit_bin_proxy(dataset, &binning, params, exec)?;
        Ok(Self { binning, regressor, classifier })
    }

    pub fn fit_sequential(dataset: &LoggedDataset, binning: BinningScheme, params: &ForestParams) -> Result<Self> {
        Self::fit(dataset, binning, params, &Sequential)
    }
}

/// All mass on the bin containing a deterministic policy's payment.
pub struct OneHotBins<'a, P: ?Sized> {
    pub policy: &'a P,
    pub binning: &'a BinningScheme,
}

impl<P: PaymentPolicy + ?Sized> BinPolicy for OneHotBins<'_, P> {
    fn num_bins(&self) -> usize {
        self.binning.num_bins()
    }
    fn bin_probabilities(&self, context: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.binning.num_bins()];
        p[self.binning.bin_of(self.policy.payment(context))] = 1.0;
        p
    }
}

/// Same probabilities everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedBins(pub Vec<f64>);

impl FixedBins {
    pub fn uniform(bins: usize) -> Self {
        Self(vec![1.0 / bins as f64; bins])
    }
}

impl BinPolicy for FixedBins {
    fn num_bins(&self) -> usize {
        self.0.len()
    }
    fn bin_probabilities(&self, _context: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Exact bin probabilities of a payment policy logged with additive Gaussian
/// noise (clamped at zero).
pub struct GaussianLoggingBins<'a, P: ?Sized> {
    pub policy: &'a P,
    pub noise_sd: f64,
    pub binning: &'a BinningScheme,
}

impl<P: PaymentPolicy + ?Sized> BinPolicy for GaussianLoggingBins<'_, P> {
    fn num_bins(&self) -> usize {
        self.binning.num_bins()
    }
    fn bin_probabilities(&self, context: &[f64]) -> Vec<f64> {
        let mu = self.policy.payment(context);
        let b = self.binning.num_bins();
        if self.noise_sd <= 0.0 {
            let mut p = vec![0.0; b];
            p[self.binning.bin_of(mu)] = 1.0;
            return p;
        }
        let cdf = |v: f64| {
            if v == f64::INFINITY {
                1.0
            } else if v == f64::NEG_INFINITY {
                0.0
            } else {
                normal_cdf((v - mu) / self.noise_sd)
            }
        };
        // Clamping at zero moves the negative tail onto the bin holding 0.
        let zero_bin = self.binning.bin_of(0.0);
        let mut p: Vec<f64> = (0..b)
            .map(|k| {
                let (lo, hi) = self.binning.open_bounds(k);
                let lo = if k == zero_bin { f64::NEG_INFINITY } else { lo.max(0.0) };
                let hi = if k < zero_bin { f64::NEG_INFINITY } else { hi };
                (cdf(hi) - cdf(lo)).max(0.0)
            })
            .collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

/// Exact Gaussian logging density around a deterministic payment policy.
pub struct GaussianLoggingDensity<'a, P: ?Sized> {
    pub policy: &'a P,
    pub noise_sd: f64,
}

impl<P: PaymentPolicy + ?Sized> BehaviorDensity for GaussianLoggingDensity<'_, P> {
    fn density(&self, context: &[f64], action: f64) -> f64 {
        let z = (action - self.policy.payment(context)) / self.noise_sd;
        crate::math::normal_pdf(z) / self.noise_sd
    }
}

pub(crate) fn check_dimension(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_bins(policy: &dyn BinPolicy, binning: &BinningScheme) -> Result<()> {
    if policy.num_bins() != binning.num_bins() {
        return Err(invalid(alloc::format!(
            "bin policy has {} bins, binning has {}",
            policy.num_bins(),
            binning.num_bins()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Matrix;

    struct Flat(f64);
    impl PaymentPolicy for Flat {
        fn dimension(&self) -> usize {
            1
        }
        fn payment(&self, _c: &[f64]) -> f64 {
            self.0
        }
    }

    #[test]
    fn constant_label_classifier_is_one_hot() {
        let x = Matrix::new((0..20).map(f64::from).collect(), 20, 1).unwrap();
        let f = TreeEnsemble::fit_classifier(&x, &[3; 20], 5, &ForestParams { max_depth: 0, ..Default::default() }).unwrap();
        assert_eq!(predict_proxy_policy(&f, &[4.0]).unwrap(), ProxyPrediction::Bins(vec![0.0, 0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn gaussian_bins_sum_to_one_and_match_cdf() {
        let binning = BinningScheme::from_edges(vec![0.0, 0.5, 1.0, 1.5, 3.0]).unwrap();
        let policy = Flat(1.0);
        let bins = GaussianLoggingBins { policy: &policy, noise_sd: 0.4, binning: &binning };
        let p = bins.bin_probabilities(&[0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let expected_mid = normal_cdf(0.5 / 0.4) - normal_cdf(0.0);
        assert!((p[2] - expected_mid).abs() < 1e-12);
        // Bin 0 holds the clamped negative tail as well as [0, 0.5).
        assert!((p[0] - normal_cdf(-0.5 / 0.4)).abs() < 1e-12);
    }

    #[test]
    fn one_hot_follows_payment() {
        let binning = BinningScheme::from_edges(vec![0.0, 1.0, 2.0]).unwrap();
        let p = Flat(1.5);
        assert_eq!(OneHotBins { policy: &p, binning: &binning }.bin_probabilities(&[0.0]), vec![0.0, 1.0]);
    }
}
