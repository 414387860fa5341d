use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gp::grid::{Aabb, Grid, SubGrid};

/// Covariance kernel of a zero-mean Gaussian process.
#[derive(Clone, Debug, PartialEq)]
pub enum CovKernelSpec {
    /// `K(x, y) = exp(-|x - y|^2 / (2 l^2))`.
    SquaredExponential { length_scale: f64 },
    /// Kernel given by its values on the nodes of a specific grid.
    Tabulated(KernelTable),
}

/// Symmetric node-by-node kernel table.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    values: DMatrix<f64>,
}

impl KernelTable {
    /// Accepts a square table that is symmetric to within `1e-12` (relative to its
    /// largest entry). Positive semidefiniteness is checked when the Mercer basis
    /// is built.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::InvalidParameter(format!(
                "kernel table must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        let scale = values.amax().max(f64::MIN_POSITIVE);
        let mut asym: f64 = 0.0;
        for i in 0..values.nrows() {
            for j in 0..i {
                asym = asym.max((values[(i, j)] - values[(j, i)]).abs());
            }
        }
        if asym > 1e-12 * scale {
            return Err(Error::NonSymmetricKernel { asymmetry: asym });
        }
        Ok(KernelTable { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

impl CovKernelSpec {
    pub fn squared_exponential(length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0) || !length_scale.is_finite() {
            return Err(Error::InvalidParameter(format!("length scale must be positive, got {length_scale}")));
        }
        Ok(CovKernelSpec::SquaredExponential { length_scale })
    }

    pub fn tabulated(values: DMatrix<f64>) -> Result<Self> {
        Ok(CovKernelSpec::Tabulated(KernelTable::new(values)?))
    }

    /// Kernel values on every pair of `grid` nodes.
    pub fn table(&self, grid: &Grid) -> Result<DMatrix<f64>> {
        match self {
            CovKernelSpec::SquaredExponential { length_scale } => {
                let nodes = grid.nodes();
                let denom = 2.0 * length_scale * length_scale;
                let dim = grid.dim();
                Ok(DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| {
                    let r2: f64 = (0..dim).map(|a| (nodes[i][a] - nodes[j][a]).powi(2)).sum();
                    (-r2 / denom).exp()
                }))
            }
            CovKernelSpec::Tabulated(t) => {
                if t.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "kernel table has {} nodes, grid has {}",
                        t.len(),
                        grid.len()
                    )));
                }
                Ok(t.values.clone())
            }
        }
    }
}

/// A kernel restricted to the nodes of a sub-box.
#[derive(Clone, Debug)]
pub struct RestrictedKernel {
    pub kernel: CovKernelSpec,
    pub subgrid: SubGrid,
}

/// Restrict `kernel` (defined on `grid`) to the nodes owned by `sub`.
pub fn restrict_kernel(kernel: &CovKernelSpec, grid: &Arc<Grid>, sub: &Aabb) -> Result<RestrictedKernel> {
    let subgrid = grid.restrict(sub)?;
    let table = match kernel {
        CovKernelSpec::SquaredExponential { .. } => kernel.table(&subgrid.grid)?,
        CovKernelSpec::Tabulated(t) => {
            if t.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "kernel table has {} nodes, grid has {}",
                    t.len(),
                    grid.len()
                )));
            }
            let idx = &subgrid.parent_index;
            DMatrix::from_fn(idx.len(), idx.len(), |i, j| t.values[(idx[i], idx[j])])
        }
    };
    Ok(RestrictedKernel { kernel: CovKernelSpec::Tabulated(KernelTable { values: table }), subgrid })
}
