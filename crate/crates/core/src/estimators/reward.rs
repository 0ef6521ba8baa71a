use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binning::BinningScheme;
use crate::error::{invalid, Error, Result};
use crate::exec::{derive_seed, Executor, Sequential};
use crate::models::{ForestParams, Matrix, TreeEnsemble};
use crate::types::{LoggedDataset, Metric};

/// Reward model evaluated on every (record, bin) pair of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardPredictions {
    /// Row-major `records x bins`.
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl RewardPredictions {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("reward predictions must be finite"));
        }
        Ok(Self { values, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { values: vec![0.0; rows * cols], rows, cols }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for k in 0..cols {
                values.push(f(i, k));
            }
        }
        Self { values, rows, cols }
    }

    pub fn get(&self, record: usize, bin: usize) -> f64 {
        self.values[record * self.cols + bin]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|v| f(*v)).collect(), rows: self.rows, cols: self.cols }
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows {
            return Err(Error::LengthMismatch { expected: rows, found: self.rows });
        }
        if self.cols != cols {
            return Err(Error::LengthMismatch { expected: cols, found: self.cols });
        }
        Ok(())
    }
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardModelParams {
    pub forest: ForestParams,
    /// Cross-fitting folds; 1 trains and predicts on the full log.
    pub folds: usize,
}

impl Default for RewardModelParams {
    fn default() -> Self {
        Self { forest: ForestParams::default(), folds: 2 }
    }
}

fn features(context: &[f64], bin: usize, bins: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(context.len() + bins);
    row.extend_from_slice(context);
    row.extend((0..bins).map(|k| if k == bin { 1.0 } else { 0.0 }));
    row
}

pub fn fit_reward_model(
    dataset: &LoggedDataset,
    binning: &BinningScheme,
    metric: Metric,
    params: &RewardModelParams,
) -> Result<RewardPredictions> {
    fit_reward_model_with(dataset, binning, metric, params, &Sequential)
}

/// Cross-fitted regression forest on `context ⊕ one-hot(bin)`. Record `i`
/// belongs to fold `i mod folds` and is predicted by the forest trained on
/// the other folds.
pub fn fit_reward_model_with<E: Executor>(
    dataset: &LoggedDataset,
    binning: &BinningScheme,
    metric: Metric,
    params: &RewardModelParams,
    exec: &E,
) -> Result<RewardPredictions> {
    let folds = params.folds;
    if folds == 0 || dataset.len() < 2 * folds {
        return Err(invalid(alloc::format!("cannot cross-fit {} records over {folds} folds", dataset.len())));
    }
    let bins = binning.num_bins();
    let records = dataset.records();
    let rows: Vec<Vec<f64>> =
        records.iter().map(|r| features(r.context.features(), binning.bin_of(r.action), bins)).collect();
    let targets = dataset.metric_values(metric);
    let mut values = vec![0.0; records.len() * bins];
    for fold in 0..folds {
        let train: Vec<usize> = (0..records.len()).filter(|i| folds == 1 || i % folds != fold).collect();
        let x = Matrix::from_rows(&train.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>())?;
        let y: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
        let forest_params = ForestParams { rng_seed: derive_seed(params.forest.rng_seed, fold as u64), ..params.forest };
        let forest = TreeEnsemble::fit_regressor_with(&x, &y, &forest_params, exec)?;
        let held_out: Vec<usize> = (0..records.len()).filter(|i| i % folds == fold).collect();
        let predicted = exec.map_indexed(held_out.len(), |j| {
            let context = records[held_out[j]].context.features();
            (0..bins).map(|k| forest.predict(&features(context, k, bins))).collect::<Result<Vec<f64>>>()
        });
        for (j, p) in predicted.into_iter().enumerate() {
            let i = held_out[j];
            values[i * bins..(i + 1) * bins].copy_from_slice(&p?);
        }
    }
    RewardPredictions::new(values, records.len(), bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Context, LoggedRecord, RewardVector, Side};

    fn log(n: usize) -> LoggedDataset {
        use rand::Rng;
        let mut rng = crate::exec::stream_rng(1, 0);
        let records = (0..n)
            .map(|i| {
                let a = rng.random_range(0..4) as f64 + 0.5;
                let rewards = RewardVector { cost: a, reach: 1.0, resources: 0.0, returns: 2.0 * a };
                LoggedRecord::new(Context::new(vec![(i % 7) as f64]).unwrap(), a, rewards, None).unwrap()
            })
            .collect();
        LoggedDataset::new(records, "t", Side::Control).unwrap()
    }

    #[test]
    fn learns_a_bin_determined_reward() {
        let d = log(400);
        let b = BinningScheme::from_edges(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let q = fit_reward_model(&d, &b, Metric::Returns, &RewardModelParams::default()).unwrap();
        assert_eq!((q.rows(), q.cols()), (400, 4));
        for k in 0..4 {
            assert!((q.get(0, k) - (2.0 * k as f64 + 1.0)).abs() < 0.05, "bin {k}: {}", q.get(0, k));
        }
    }

    #[test]
    fn constant_reward_is_reproduced() {
        let d = log(50);
        let b = BinningScheme::from_edges(vec![0.0, 2.0, 4.0]).unwrap();
        let q = fit_reward_model(&d, &b, Metric::Reach, &RewardModelParams::default()).unwrap();
        assert!((0..50).all(|i| q.get(i, 0) == 1.0 && q.get(i, 1) == 1.0));
    }

    #[test]
    fn deterministic_and_rejects_tiny_logs() {
        let d = log(60);
        let b = BinningScheme::from_edges(vec![0.0, 2.0, 4.0]).unwrap();
        let p = RewardModelParams::default();
        assert_eq!(fit_reward_model(&d, &b, Metric::Cost, &p).unwrap(), fit_reward_model(&d, &b, Metric::Cost, &p).unwrap());
        assert!(fit_reward_model(&log(3), &b, Metric::Cost, &p).is_err());
    }
}
