//! Random forests of CART trees.
//!
//! Regression trees split on variance reduction, classification trees on Gini
//! impurity. Thresholds are midpoints between consecutive distinct values and
//! ties between candidate splits go to the lowest feature index. Tree `t` draws
//! its bootstrap sample and feature subsets from stream `t` of the ensemble
//! seed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{invalid, Error, Result};
use crate::exec::{stream_rng, Executor, Sequential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    Regression,
    Classification,
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub rng_seed: u64,
    /// Features tried per split; `None` uses sqrt(d) (classification) or ceil(d/3) (regression).
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { num_trees: 50, max_depth: 10, min_leaf: 5, bootstrap: true, rng_seed: 0, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    /// Mean target (regression) or class counts (classification).
    Leaf { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { values } => return values,
            }
        }
    }

    fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    mode: ForestMode,
    num_classes: usize,
    feature_dimension: usize,
}

impl TreeEnsemble {
    pub fn fit_regressor(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<Self> {
        Self::fit_with(x, Targets::Real(y), params, &Sequential)
    }

    pub fn fit_classifier(x: &Matrix, labels: &[usize], num_classes: usize, params: &ForestParams) -> Result<Self> {
        Self::fit_with(x, Targets::Class(labels, num_classes), params, &Sequential)
    }

    pub fn fit_regressor_with<E: Executor>(x: &Matrix, y: &[f64], params: &ForestParams, exec: &E) -> Result<Self> {
        Self::fit_with(x, Targets::Real(y), params, exec)
    }

    pub fn fit_classifier_with<E: Executor>(
        x: &Matrix,
        labels: &[usize],
        num_classes: usize,
        params: &ForestParams,
        exec: &E,
    ) -> Result<Self> {
        Self::fit_with(x, Targets::Class(labels, num_classes), params, exec)
    }

    fn fit_with<E: Executor>(x: &Matrix, targets: Targets<'_>, params: &ForestParams, exec: &E) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if n < 2 {
            return Err(invalid("a forest needs at least 2 training rows"));
        }
        if targets.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: targets.len() });
        }
        if params.num_trees == 0 || params.min_leaf == 0 {
            return Err(invalid("num_trees and min_leaf must be at least 1"));
        }
        let (mode, num_classes) = match targets {
            Targets::Real(y) => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("regression targets must be finite"));
                }
                (ForestMode::Regression, 0)
            }
            Targets::Class(labels, k) => {
                if k == 0 {
                    return Err(invalid("num_classes must be at least 1"));
                }
                if let Some(bad) = labels.iter().find(|&&l| l >= k) {
                    return Err(invalid(format!("class label {bad} outside [0, {k})")));
                }
                (ForestMode::Classification, k)
            }
        };
        let d = x.cols();
        let mtry = params
            .max_features
            .unwrap_or(match mode {
                ForestMode::Classification => libm::floor(libm::sqrt(d as f64)) as usize,
                ForestMode::Regression => d.div_ceil(3),
            })
            .clamp(1, d.max(1));
        // Column-major copy: split search scans one feature at a time.
        let columns: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
        let trees = exec.map_indexed(params.num_trees, |t| {
            let mut rng = stream_rng(params.rng_seed, t as u64);
            let mut sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = Builder { columns: &columns, targets, params, mtry, rng, nodes: Vec::new(), scratch: Vec::new() };
            builder.build(&mut sample, 0);
            Tree { nodes: builder.nodes }
        });
        Ok(Self { trees, mode, num_classes, feature_dimension: d })
    }

    pub fn mode(&self) -> ForestMode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dimension(&self) -> usize {
        self.feature_dimension
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dimension {
            return Err(Error::DimensionMismatch { expected: self.feature_dimension, found: x.len() });
        }
        Ok(())
    }

    /// Mean of the trees' leaf values (regression forests).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if self.mode != ForestMode::Regression {
            return Err(invalid("predict requires a regression forest"));
        }
        Ok(self.trees.iter().map(|t| t.leaf(x)[0]).sum::<f64>() / self.trees.len() as f64)
    }

    /// Averaged normalized leaf histograms (classification forests).
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if self.mode != ForestMode::Classification {
            return Err(invalid("predict_proba requires a classification forest"));
        }
        let mut probs = vec![0.0; self.num_classes];
        for t in &self.trees {
            let hist = t.leaf(x);
            let total: f64 = hist.iter().sum();
            for (p, h) in probs.iter_mut().zip(hist) {
                *p += h / total;
            }
        }
        let m = self.trees.len() as f64;
        probs.iter_mut().for_each(|p| *p /= m);
        Ok(probs)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let probs = self.predict_proba(x)?;
        let mut best = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = k;
            }
        }
        Ok(best)
    }
}

#[derive(Clone, Copy)]
enum Targets<'a> {
    Real(&'a [f64]),
    Class(&'a [usize], usize),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Real(y) => y.len(),
            Targets::Class(l, _) => l.len(),
        }
    }
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    targets: Targets<'a>,
    params: &'a ForestParams,
    mtry: usize,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn leaf_values(&self, idx: &[usize]) -> Vec<f64> {
        match self.targets {
            Targets::Real(y) => vec![idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64],
            Targets::Class(labels, k) => {
                let mut counts = vec![0.0; k];
                for &i in idx {
                    counts[labels[i]] += 1.0;
                }
                counts
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self.targets {
            Targets::Real(y) => idx.iter().all(|&i| y[i] == y[idx[0]]),
            Targets::Class(l, _) => idx.iter().all(|&i| l[i] == l[idx[0]]),
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { values: Vec::new() });
        let split = if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf || self.is_pure(idx) {
            None
        } else {
            self.best_split(idx)
        };
        match split {
            None => {
                self.nodes[id as usize] = Node::Leaf { values: self.leaf_values(idx) };
            }
            Some(s) => {
                let mut mid = 0;
                for j in 0..idx.len() {
                    if self.columns[s.feature][idx[j]] <= s.threshold {
                        idx.swap(mid, j);
                        mid += 1;
                    }
                }
                let (l, r) = idx.split_at_mut(mid);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[id as usize] = Node::Split { feature: s.feature as u32, threshold: s.threshold, left, right };
            }
        }
        id
    }

    /// Random feature order; the first `mtry` entries are the candidate set.
    fn feature_order(&mut self) -> Vec<usize> {
        let d = self.columns.len();
        let mut features: Vec<usize> = (0..d).collect();
        for i in 0..d.saturating_sub(1) {
            let j = self.rng.random_range(i..d);
            features.swap(i, j);
        }
        features
    }

    /// Best split over the `mtry` candidate features. When none of them
    /// admits a valid split, further features are tried one at a time in the
    /// drawn order until one does.
    fn best_split(&mut self, idx: &[usize]) -> Option<Split> {
        let order = self.feature_order();
        let mut candidates = order[..self.mtry].to_vec();
        candidates.sort_unstable();
        let mut best = self.best_split_among(idx, &candidates);
        for &f in &order[self.mtry..] {
            if best.is_some() {
                break;
            }
            best = self.best_split_among(idx, &[f]);
        }
        best
    }

    fn best_split_among(&mut self, idx: &[usize], features: &[usize]) -> Option<Split> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Split> = None;
        let mut scratch = core::mem::take(&mut self.scratch);
        for &f in features {
            scratch.clear();
            let column = &self.columns[f];
            scratch.extend(idx.iter().map(|&i| (column[i], i)));
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            match self.targets {
                Targets::Real(y) => {
                    let total: f64 = scratch.iter().map(|&(_, i)| y[i]).sum();
                    let parent = total * total / n as f64;
                    let mut left = 0.0;
                    for pos in 1..n {
                        left += y[scratch[pos - 1].1];
                        if pos < min_leaf || n - pos < min_leaf || scratch[pos - 1].0 == scratch[pos].0 {
                            continue;
                        }
                        let right = total - left;
                        let score = left * left / pos as f64 + right * right / (n - pos) as f64;
                        consider(&mut best, f, &scratch, pos, score - parent, parent);
                    }
                }
                Targets::Class(labels, k) => {
                    let mut total = vec![0.0; k];
                    for &(_, i) in scratch.iter() {
                        total[labels[i]] += 1.0;
                    }
                    let parent = total.iter().map(|c| c * c).sum::<f64>() / n as f64;
                    let mut left = vec![0.0; k];
                    let mut left_sq = 0.0;
                    let mut right_sq = total.iter().map(|c| c * c).sum::<f64>();
                    for pos in 1..n {
                        let c = labels[scratch[pos - 1].1];
                        left_sq += 2.0 * left[c] + 1.0;
                        left[c] += 1.0;
                        let rc = total[c] - left[c];
                        right_sq -= 2.0 * rc + 1.0;
                        if pos < min_leaf || n - pos < min_leaf || scratch[pos - 1].0 == scratch[pos].0 {
                            continue;
                        }
                        let score = left_sq / pos as f64 + right_sq / (n - pos) as f64;
                        consider(&mut best, f, &scratch, pos, score - parent, parent);
                    }
                }
            }
        }
        self.scratch = scratch;
        best
    }
}

fn consider(best: &mut Option<Split>, feature: usize, sorted: &[(f64, usize)], pos: usize, gain: f64, parent: f64) {
    if !(gain > 1e-12 * parent.abs()) || gain <= 0.0 {
        return;
    }
    if best.as_ref().is_some_and(|b| gain <= b.gain) {
        return;
    }
    let (a, b) = (sorted[pos - 1].0, sorted[pos].0);
    let mid = a + (b - a) / 2.0;
    let threshold = if mid >= b { a } else { mid };
    *best = Some(Split { feature, threshold, gain });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::new(data, n, d).unwrap()
    }

    #[test]
    fn depth_zero_is_bootstrap_mean() {
        let x = random_matrix(200, 3, 1);
        let y: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let params = ForestParams { max_depth: 0, num_trees: 200, ..Default::default() };
        let f = TreeEnsemble::fit_regressor(&x, &y, &params).unwrap();
        assert_eq!(f.max_depth(), 0);
        let mean = y.iter().sum::<f64>() / 200.0;
        let p = f.predict(x.row(0)).unwrap();
        assert!((p - mean).abs() < 0.05 * mean, "{p} vs {mean}");
        // Same prediction everywhere.
        assert_eq!(p, f.predict(x.row(17)).unwrap());
    }

    #[test]
    fn separable_classes_fit_perfectly() {
        let x = random_matrix(300, 2, 0);
        let labels: Vec<usize> = (0..300).map(|i| usize::from(x.get(i, 0) + 0.5 * x.get(i, 1) > 0.0)).collect();
        let params = ForestParams { num_trees: 50, max_depth: 4, min_leaf: 1, rng_seed: 0, ..Default::default() };
        let f = TreeEnsemble::fit_classifier(&x, &labels, 2, &params).unwrap();
        let correct = (0..300).filter(|&i| f.predict_class(x.row(i)).unwrap() == labels[i]).count();
        assert_eq!(correct, 300);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = random_matrix(100, 4, 5);
        let y: Vec<f64> = (0..100).map(|i| x.get(i, 1) * 2.0).collect();
        let p = ForestParams { rng_seed: 9, num_trees: 10, ..Default::default() };
        assert_eq!(TreeEnsemble::fit_regressor(&x, &y, &p).unwrap(), TreeEnsemble::fit_regressor(&x, &y, &p).unwrap());
    }

    #[test]
    fn constant_target_gives_single_leaves() {
        let x = random_matrix(50, 2, 2);
        let f = TreeEnsemble::fit_regressor(&x, &[3.25; 50], &ForestParams::default()).unwrap();
        assert_eq!(f.max_depth(), 0);
        assert_eq!(f.predict(&[10.0, -10.0]).unwrap(), 3.25);
        let c = TreeEnsemble::fit_classifier(&x, &[3; 50], 5, &ForestParams::default()).unwrap();
        assert_eq!(c.predict_proba(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn errors() {
        let x = random_matrix(10, 2, 2);
        assert!(matches!(TreeEnsemble::fit_regressor(&x, &[1.0; 9], &ForestParams::default()), Err(Error::LengthMismatch { .. })));
        assert!(TreeEnsemble::fit_classifier(&x, &[2; 10], 2, &ForestParams::default()).is_err());
        let empty = Matrix::new(Vec::new(), 0, 2).unwrap();
        assert_eq!(TreeEnsemble::fit_regressor(&empty, &[], &ForestParams::default()), Err(Error::EmptyInput));
        let f = TreeEnsemble::fit_regressor(&x, &[1.0; 10], &ForestParams::default()).unwrap();
        assert!(matches!(f.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn regression_predictions_within_target_range() {
        let x = random_matrix(400, 3, 8);
        let y: Vec<f64> = (0..400).map(|i| libm::sin(x.get(i, 0)) + x.get(i, 2).abs()).collect();
        let f = TreeEnsemble::fit_regressor(&x, &y, &ForestParams { num_trees: 20, ..Default::default() }).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let probe = random_matrix(500, 3, 99);
        for i in 0..500 {
            let p = f.predict(probe.row(i)).unwrap();
            assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn probabilities_normalized() {
        let x = random_matrix(300, 3, 4);
        let labels: Vec<usize> = (0..300).map(|i| ((x.get(i, 0) + 2.0).max(0.0) as usize).min(3)).collect();
        let f = TreeEnsemble::fit_classifier(&x, &labels, 4, &ForestParams { num_trees: 15, ..Default::default() }).unwrap();
        let probe = random_matrix(1000, 3, 12);
        for i in 0..1000 {
            let p = f.predict_proba(probe.row(i)).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
