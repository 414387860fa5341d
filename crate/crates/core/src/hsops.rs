//! Discretized Hilbert–Schmidt operators with quadrature-weighted geometry.
//!
//! Every norm and inner product carries the grid weights: the HS norm of an
//! operator is the discrete `L^2(D_2 × D_1)` norm of its kernel, and singular
//! functions are orthonormal in the grid quadrature.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, QR, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::quasimatrix::{same_grid, weighted_gram};
use crate::gp::{Grid, GridDocument, Quasimatrix};

/// Relative drop tolerance of [`orthonormalize`].
pub const RANK_DROP_TOL: f64 = 1e-10;

/// Something that maps grid functions on an input grid to grid functions on an
/// output grid. The range finder and the learner only see operators through
/// this trait.
pub trait BlackBox: Sync {
    fn input_grid(&self) -> &Arc<Grid>;
    fn output_grid(&self) -> &Arc<Grid>;
    fn apply(&self, f: &DVector<f64>) -> Result<DVector<f64>>;

    /// Apply column by column.
    fn apply_columns(&self, q: &Quasimatrix) -> Result<Quasimatrix> {
        same_grid(q.grid(), self.input_grid())?;
        let cols = (0..q.count())
            .map(|j| self.apply(&q.column(j)))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Ok(Quasimatrix::empty(Arc::clone(self.output_grid())));
        }
        Quasimatrix::from_columns(Arc::clone(self.output_grid()), &cols)
    }
}

/// Kernel `G(x, y)` tabulated on `row_grid × col_grid`.
#[derive(Clone, Debug)]
pub struct HsOperator {
    row_grid: Arc<Grid>,
    col_grid: Arc<Grid>,
    kernel: DMatrix<f64>,
}

impl HsOperator {
    pub fn new(row_grid: Arc<Grid>, col_grid: Arc<Grid>, kernel: DMatrix<f64>) -> Result<Self> {
        if kernel.nrows() != row_grid.len() || kernel.ncols() != col_grid.len() {
            return Err(Error::GridMismatch(format!(
                "kernel is {}x{}, grids have {} and {} nodes",
                kernel.nrows(),
                kernel.ncols(),
                row_grid.len(),
                col_grid.len()
            )));
        }
        Ok(HsOperator { row_grid, col_grid, kernel })
    }

    pub fn row_grid(&self) -> &Arc<Grid> {
        &self.row_grid
    }

    pub fn col_grid(&self) -> &Arc<Grid> {
        &self.col_grid
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `(F f)(x_i) = Σ_j w_j G(x_i, y_j) f(y_j)`.
    pub fn apply(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        if f.len() != self.col_grid.len() {
            return Err(Error::GridMismatch(format!(
                "input has {} values, column grid has {} nodes",
                f.len(),
                self.col_grid.len()
            )));
        }
        let wf = DVector::from_iterator(f.len(), f.iter().zip(self.col_grid.weights()).map(|(v, w)| v * w));
        Ok(&self.kernel * wf)
    }

    pub fn hs_norm_sq(&self) -> f64 {
        let wr = self.row_grid.weights();
        let wc = self.col_grid.weights();
        let mut s = 0.0;
        for j in 0..self.kernel.ncols() {
            let col: f64 = (0..self.kernel.nrows()).map(|i| wr[i] * self.kernel[(i, j)].powi(2)).sum();
            s += wc[j] * col;
        }
        s
    }

    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    /// `self - other` on identical grids.
    pub fn sub(&self, other: &HsOperator) -> Result<HsOperator> {
        same_grid(&self.row_grid, &other.row_grid)?;
        same_grid(&self.col_grid, &other.col_grid)?;
        Ok(HsOperator {
            row_grid: Arc::clone(&self.row_grid),
            col_grid: Arc::clone(&self.col_grid),
            kernel: &self.kernel - &other.kernel,
        })
    }

    /// Adjoint operator, with kernel `G(y, x)`.
    pub fn adjoint(&self) -> HsOperator {
        HsOperator {
            row_grid: Arc::clone(&self.col_grid),
            col_grid: Arc::clone(&self.row_grid),
            kernel: self.kernel.transpose(),
        }
    }

    pub fn to_document(&self) -> HsOperatorDocument {
        HsOperatorDocument {
            row_grid: GridDocument::from(&*self.row_grid),
            col_grid: GridDocument::from(&*self.col_grid),
            kernel_values: self.kernel.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl BlackBox for HsOperator {
    fn input_grid(&self) -> &Arc<Grid> {
        &self.col_grid
    }
    fn output_grid(&self) -> &Arc<Grid> {
        &self.row_grid
    }
    fn apply(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        HsOperator::apply(self, f)
    }
}

/// JSON form of an operator; `kernel_values` is row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HsOperatorDocument {
    pub row_grid: GridDocument,
    pub col_grid: GridDocument,
    pub kernel_values: Vec<Vec<f64>>,
}

impl HsOperatorDocument {
    pub fn to_operator(&self) -> Result<HsOperator> {
        let rows = Arc::new(self.row_grid.to_uniform_grid()?);
        let cols = Arc::new(self.col_grid.to_uniform_grid()?);
        if self.kernel_values.len() != rows.len() || self.kernel_values.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::GridMismatch("kernel_values shape does not match grids".into()));
        }
        let k = DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.kernel_values[i][j]);
        HsOperator::new(rows, cols, k)
    }
}

/// Singular triplets in the weighted geometry, singular values nonincreasing.
#[derive(Clone, Debug)]
pub struct WeightedSvd {
    pub left: Quasimatrix,
    pub singular_values: Vec<f64>,
    pub right: Quasimatrix,
}

impl WeightedSvd {
    /// `(Σ_{j>k} σ_j^2)^{1/2}`.
    pub fn tail(&self, k: usize) -> f64 {
        self.singular_values.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Best rank-`k` approximant in the discrete HS norm.
    pub fn truncate(&self, k: usize) -> Result<HsOperator> {
        let k = k.min(self.singular_values.len());
        let u = self.left.values().columns(0, k);
        let v = self.right.values().columns(0, k);
        let mut us = u.into_owned();
        for j in 0..k {
            us.column_mut(j).scale_mut(self.singular_values[j]);
        }
        HsOperator::new(Arc::clone(self.left.grid()), Arc::clone(self.right.grid()), us * v.transpose())
    }
}

/// SVD of `W_row^{1/2} G W_col^{1/2}`, mapped back to singular functions.
pub fn weighted_svd(op: &HsOperator) -> Result<WeightedSvd> {
    let sr: Vec<f64> = op.row_grid.weights().iter().map(|w| w.sqrt()).collect();
    let sc: Vec<f64> = op.col_grid.weights().iter().map(|w| w.sqrt()).collect();
    let (m, n) = op.kernel.shape();
    let scaled = DMatrix::from_fn(m, n, |i, j| sr[i] * op.kernel[(i, j)] * sc[j]);
    let svd = SVD::try_new(scaled, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure(format!("SVD of {m}x{n} operator did not converge")))?;
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let left = DMatrix::from_fn(m, r, |i, c| u[(i, order[c])] / sr[i]);
    let right = DMatrix::from_fn(n, r, |i, c| vt[(order[c], i)] / sc[i]);
    Ok(WeightedSvd {
        left: Quasimatrix::new(Arc::clone(&op.row_grid), left)?,
        singular_values: order.iter().map(|&c| svd.singular_values[c]).collect(),
        right: Quasimatrix::new(Arc::clone(&op.col_grid), right)?,
    })
}

/// Weighted Gram–Schmidt (two passes) with rank dropping.
///
/// Columns whose residual falls below `1e-10 ·` (largest input column norm) are
/// discarded, so rank-deficient input yields fewer columns. All-zero input gives
/// an empty quasimatrix.
pub fn orthonormalize(q: &Quasimatrix) -> Quasimatrix {
    let grid = Arc::clone(q.grid());
    let w = grid.weights();
    let norm = |v: &DVector<f64>| v.iter().zip(w).map(|(a, w)| w * a * a).sum::<f64>().sqrt();
    let max_norm = (0..q.count()).map(|j| norm(&q.column(j))).fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Quasimatrix::empty(grid);
    }
    let tol = RANK_DROP_TOL * max_norm;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..q.count() {
        let mut v = q.column(j);
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = b.iter().zip(v.iter()).zip(w).map(|((x, y), w)| w * x * y).sum();
                v.axpy(-c, b, 1.0);
            }
        }
        let nv = norm(&v);
        if nv > tol {
            basis.push(v / nv);
        }
    }
    Quasimatrix::from_columns(grid, &basis).expect("columns live on the input grid")
}

/// Orthonormal basis with exactly `min(nodes, columns)` columns containing the
/// span of `q`, from a Householder QR of `W^{1/2} q`. No columns are dropped:
/// directions beyond the numerical rank are completed arbitrarily.
pub fn orthonormal_basis_full(q: &Quasimatrix) -> Quasimatrix {
    let grid = Arc::clone(q.grid());
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let v = q.values();
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| sw[i] * v[(i, j)]);
    let qm = QR::new(scaled).q();
    let out = DMatrix::from_fn(qm.nrows(), qm.ncols(), |i, j| qm[(i, j)] / sw[i]);
    Quasimatrix::new(grid, out).expect("same grid")
}

/// `P_basis ∘ op`, the orthogonal projection of the operator's range onto the
/// span of `basis`.
pub fn project_rows(op: &HsOperator, basis: &Quasimatrix) -> Result<HsOperator> {
    same_grid(basis.grid(), &op.row_grid)?;
    let q = orthonormalize(basis);
    let coeffs = weighted_gram(op.row_grid.weights(), q.values(), &op.kernel);
    HsOperator::new(Arc::clone(&op.row_grid), Arc::clone(&op.col_grid), q.values() * coeffs)
}
