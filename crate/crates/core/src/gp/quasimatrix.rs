use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::grid::{Grid, SubGrid};

/// Grid functions stored as the columns of a node-by-count matrix.
#[derive(Clone, Debug)]
pub struct Quasimatrix {
    grid: Arc<Grid>,
    values: DMatrix<f64>,
}

impl Quasimatrix {
    pub fn new(grid: Arc<Grid>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "quasimatrix has {} rows, grid has {} nodes",
                values.nrows(),
                grid.len()
            )));
        }
        Ok(Quasimatrix { grid, values })
    }

    pub fn empty(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Quasimatrix { grid, values: DMatrix::zeros(n, 0) }
    }

    pub fn from_columns(grid: Arc<Grid>, columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Ok(Self::empty(grid));
        }
        Self::new(grid, DMatrix::from_columns(columns))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }

    /// Weighted Gram matrix `A^* W B`.
    pub fn gram(&self, other: &Quasimatrix) -> Result<DMatrix<f64>> {
        same_grid(&self.grid, &other.grid)?;
        Ok(weighted_gram(self.grid.weights(), &self.values, &other.values))
    }

    /// `Σ_j ||q_j||^2` in the grid quadrature (squared HS norm of the quasimatrix).
    pub fn hs_norm_sq(&self) -> f64 {
        let w = self.grid.weights();
        self.values
            .column_iter()
            .map(|c| c.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>())
            .sum()
    }

    /// Right-multiply the coefficient matrix: columns become `Q * m`.
    pub fn mul_matrix(&self, m: &DMatrix<f64>) -> Quasimatrix {
        Quasimatrix { grid: Arc::clone(&self.grid), values: &self.values * m }
    }

    /// Sub-grid values of every column.
    pub fn restrict(&self, sub: &SubGrid) -> Result<Quasimatrix> {
        same_grid(&self.grid, &sub.parent)?;
        let idx = &sub.parent_index;
        let values = DMatrix::from_fn(idx.len(), self.count(), |i, j| self.values[(idx[i], j)]);
        Ok(Quasimatrix { grid: Arc::clone(&sub.grid), values })
    }

    /// Zero extension of every column from `sub` to its parent grid.
    pub fn extend_by_zero(&self, sub: &SubGrid) -> Result<Quasimatrix> {
        same_grid(&self.grid, &sub.grid)?;
        let mut values = DMatrix::zeros(sub.parent.len(), self.count());
        for (i, &p) in sub.parent_index.iter().enumerate() {
            for j in 0..self.count() {
                values[(p, j)] = self.values[(i, j)];
            }
        }
        Ok(Quasimatrix { grid: Arc::clone(&sub.parent), values })
    }
}

pub(crate) fn weighted_gram(w: &[f64], a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let wb = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| w[i] * b[(i, j)]);
    a.transpose() * wb
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "grids differ ({} vs {} nodes on {} / {})",
            a.len(),
            b.len(),
            a.bbox(),
            b.bbox()
        )))
    }
}

/// Zero extension of a single sub-grid function.
pub fn extend_by_zero(f: &[f64], sub: &SubGrid, grid: &Arc<Grid>) -> Result<Vec<f64>> {
    same_grid(&sub.parent, grid)?;
    sub.extend_values(f)
}
