//! Equal-frequency discretization of the payment axis.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::types::LoggedDataset;

pub const DEFAULT_NUM_BINS: usize = 10;

/// `B + 1` strictly increasing edges spanning the observed action range.
///
/// Bin `k` covers `[edges[k], edges[k + 1])`; actions outside the range are
/// assigned to the first or last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    edges: Vec<f64>,
}

impl BinningScheme {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(invalid("a binning needs at least 2 bins (3 edges)"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("bin edges must be finite and strictly increasing"));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bin_of(&self, action: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= action)
    }

    /// `(low, high)` bounds of bin `k`, with the outer bins open-ended.
    pub fn open_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.edges[k] };
        let hi = if k + 1 == self.num_bins() { f64::INFINITY } else { self.edges[k + 1] };
        (lo, hi)
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }
}

/// Equal-frequency bins over the dataset's logged actions.
pub fn make_binning(dataset: &LoggedDataset, num_bins: usize) -> Result<BinningScheme> {
    binning_from_actions(&dataset.actions(), num_bins)
}

pub fn binning_from_actions(actions: &[f64], num_bins: usize) -> Result<BinningScheme> {
    if num_bins < 2 {
        return Err(invalid("num_bins must be at least 2"));
    }
    if actions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = actions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (min, max) = (sorted[0], sorted[n - 1]);
    if min == max {
        return Err(Error::DegenerateActions);
    }
    let mut edges = Vec::with_capacity(num_bins + 1);
    edges.push(min);
    for k in 1..num_bins {
        if let Some(cut) = cut_near(&sorted, k * n / num_bins) {
            if cut > *edges.last().unwrap() {
                edges.push(cut);
            }
        }
    }
    // The closing edge is nominal; a cut may already sit on the maximum.
    let last = *edges.last().unwrap();
    edges.push(if max > last { max } else { max.next_up() });
    BinningScheme::from_edges(edges)
}

// Cut point between sorted[pos - 1] and sorted[pos], moved to the nearest
// position holding two distinct values.
fn cut_near(sorted: &[f64], target: usize) -> Option<f64> {
    let n = sorted.len();
    let distinct_at = |p: usize| p >= 1 && p < n && sorted[p - 1] < sorted[p];
    let mut pos = None;
    for off in 0..n {
        if target >= off && distinct_at(target - off) {
            pos = Some(target - off);
            break;
        }
        if distinct_at(target + off) {
            pos = Some(target + off);
            break;
        }
    }
    let p = pos?;
    let (a, b) = (sorted[p - 1], sorted[p]);
    let mid = a + (b - a) / 2.0;
    Some(if mid <= a { b } else { mid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn median_split() {
        let b = binning_from_actions(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(b.num_bins(), 2);
        assert_eq!(b.edges()[1], 2.5);
        let bins: Vec<usize> = [1.0, 2.0, 3.0, 4.0].iter().map(|&a| b.bin_of(a)).collect();
        assert_eq!(bins, vec![0, 0, 1, 1]);
    }

    #[test]
    fn hundred_uniform_actions_ten_per_bin() {
        let actions: Vec<f64> = (0..100).map(f64::from).collect();
        let b = binning_from_actions(&actions, 10).unwrap();
        let mut counts = [0usize; 10];
        for &a in &actions {
            counts[b.bin_of(a)] += 1;
        }
        assert_eq!(counts, [10; 10]);
    }

    #[test]
    fn identical_actions_are_degenerate() {
        assert_eq!(binning_from_actions(&[5.0, 5.0, 5.0], 2), Err(Error::DegenerateActions));
        assert!(binning_from_actions(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn heavy_ties_still_partition() {
        let actions = [5.0, 5.0, 5.0, 6.0];
        let b = binning_from_actions(&actions, 2).unwrap();
        assert_eq!(b.num_bins(), 2);
        assert_eq!(b.bin_of(5.0), 0);
        assert_eq!(b.bin_of(6.0), 1);
    }

    #[test]
    fn out_of_range_actions_clamp() {
        let b = binning_from_actions(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(b.bin_of(-10.0), 0);
        assert_eq!(b.bin_of(10.0), 1);
    }

    proptest! {
        #[test]
        fn equal_frequency_for_distinct_actions(
            raw in proptest::collection::btree_set(0u32..100_000, 2..300),
            bins in 2usize..15,
        ) {
            let actions: Vec<f64> = raw.into_iter().map(|v| f64::from(v) * 0.01).collect();
            prop_assume!(bins <= actions.len());
            let b = binning_from_actions(&actions, bins).unwrap();
            prop_assert_eq!(b.num_bins(), bins);
            let mut counts = vec![0usize; bins];
            for &a in &actions {
                let k = b.bin_of(a);
                prop_assert!(k < bins);
                counts[k] += 1;
            }
            let lo = *counts.iter().min().unwrap();
            let hi = *counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "{:?}", counts);
        }

        #[test]
        fn every_action_in_range(actions in proptest::collection::vec(0.0..50.0f64, 2..200), bins in 2usize..12) {
            if let Ok(b) = binning_from_actions(&actions, bins) {
                for w in b.edges().windows(2) {
                    prop_assert!(w[0] < w[1]);
                }
                for &a in &actions {
                    let k = b.bin_of(a);
                    prop_assert!(k < b.num_bins());
                    prop_assert!(b.edges()[k] <= a && (a < b.edges()[k + 1] || k + 1 == b.num_bins()));
                }
            }
        }
    }
}
