//! Learned components: tree ensembles, kernel density estimation and the
//! payment MLP.

pub mod forest;
pub mod kde;
pub mod kernel;
pub mod mlp;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{ForestMode, ForestParams, TreeEnsemble};
pub use kde::{silverman_bandwidths, KdeDensity};
pub use kernel::{KernelKind, KernelSpec};
pub use mlp::{MlpGradients, MlpPolicy};

/// Floor applied to every density or probability used as a divisor.
pub const PROPENSITY_FLOOR: f64 = 1e-6;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, rows: rows.len(), cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Appends one column to every row.
    pub fn with_column(&self, column: &[f64]) -> Result<Self> {
        if column.len() != self.rows {
            return Err(Error::LengthMismatch { expected: self.rows, found: column.len() });
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for (i, &c) in column.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(c);
        }
        Ok(Self { data, rows: self.rows, cols: self.cols + 1 })
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { data, rows: indices.len(), cols: self.cols }
    }
}
