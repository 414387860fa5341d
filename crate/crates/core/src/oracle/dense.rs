use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::elliptic::EllipticOracle;
use crate::error::{Error, Result};
use crate::gp::{Aabb, Grid};
use crate::hsops::HsOperator;
use crate::partition::{AdmissiblePartition, BoxIndex};

/// Largest number of interior unknowns for which a dense reference is built.
pub const DENSE_CAP: usize = 8000;

/// Dense discrete Green's function on the full grid (zero rows and columns on
/// the boundary), `G_ij = (L^{-1})_ij / w_j`.
#[derive(Clone, Debug)]
pub struct DenseGreen {
    grid: Arc<Grid>,
    values: DMatrix<f64>,
}

pub fn dense_green(oracle: &EllipticOracle) -> Result<DenseGreen> {
    dense_green_with_cap(oracle, DENSE_CAP)
}

/// Columns come from unmetered solves, so building a reference does not
/// disturb the oracle's query count.
pub fn dense_green_with_cap(oracle: &EllipticOracle, cap: usize) -> Result<DenseGreen> {
    let unknowns = oracle.interior_count();
    if unknowns > cap {
        return Err(Error::DenseCapExceeded { unknowns, cap });
    }
    let grid = Arc::clone(oracle.grid());
    let n = grid.len();
    let nodes = oracle.interior_nodes();
    let cols: Vec<DVector<f64>> = nodes
        .par_iter()
        .map(|&j| {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            oracle.solve_unmetered(&e).map(|u| u / grid.weights()[j])
        })
        .collect::<Result<_>>()?;
    let mut values = DMatrix::zeros(n, n);
    for (c, &j) in cols.iter().zip(nodes) {
        values.set_column(j, c);
    }
    Ok(DenseGreen { grid, values })
}

impl DenseGreen {
    pub fn from_parts(grid: Arc<Grid>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.len() || values.ncols() != grid.len() {
            return Err(Error::GridMismatch(format!("{}x{} table for {} nodes", values.nrows(), values.ncols(), grid.len())));
        }
        Ok(DenseGreen { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn operator(&self) -> HsOperator {
        HsOperator::new(Arc::clone(&self.grid), Arc::clone(&self.grid), self.values.clone()).expect("square on grid")
    }

    /// `||G − G^T||_F / ||G||_F`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.values - self.values.transpose()).norm() / self.values.norm()
    }

    pub fn min_entry(&self) -> f64 {
        self.values.min()
    }

    pub fn max_entry(&self) -> f64 {
        self.values.max()
    }

    /// `||G||²_{L²(D × D)}`.
    pub fn norm_sq(&self) -> f64 {
        let w = self.grid.weights();
        let mut s = 0.0;
        for j in 0..w.len() {
            let col = self.values.column(j);
            let mut c = 0.0;
            for i in 0..w.len() {
                c += w[i] * col[i] * col[i];
            }
            s += w[j] * c;
        }
        s
    }

    /// Restriction to `X × Y` (rows in `X`).
    pub fn block(&self, x: &Aabb, y: &Aabb) -> Result<HsOperator> {
        let sx = self.grid.restrict(x)?;
        let sy = self.grid.restrict(y)?;
        let k = DMatrix::from_fn(sx.len(), sy.len(), |i, j| self.values[(sx.parent_index[i], sy.parent_index[j])]);
        HsOperator::new(Arc::clone(&sx.grid), Arc::clone(&sy.grid), k)
    }

    fn mass_on(&self, xs: &[usize], ys: &[usize]) -> f64 {
        let w = self.grid.weights();
        let mut s = 0.0;
        for &j in ys {
            let mut c = 0.0;
            for &i in xs {
                let g = self.values[(i, j)];
                c += w[i] * g * g;
            }
            s += w[j] * c;
        }
        s
    }

    /// `||G||²_{L²(X × Y)}` in the grid quadrature.
    pub fn block_mass_sq(&self, x: &Aabb, y: &Aabb) -> f64 {
        self.mass_on(&self.grid.owned_nodes(x), &self.grid.owned_nodes(y))
    }

    /// Total squared mass on the non-admissible leaves of a partition.
    pub fn non_admissible_mass_sq(&self, partition: &AdmissiblePartition) -> f64 {
        let mut owned: HashMap<BoxIndex, Vec<usize>> = HashMap::new();
        let domain = partition.domain;
        let mut total = 0.0;
        for leaf in &partition.non_admissible {
            for (idx, geom) in [(leaf.x_index, leaf.x), (leaf.y_index, leaf.y)] {
                owned.entry(idx).or_insert_with(|| {
                    self.grid.nodes().iter().enumerate().filter(|(_, p)| geom.owns(p, &domain)).map(|(i, _)| i).collect()
                });
            }
            total += self.mass_on(&owned[&leaf.x_index], &owned[&leaf.y_index]);
        }
        total
    }

    /// `max G(x, y) ||x − y|| / ||G||_{L²}` over node pairs at least `min_separation` apart.
    pub fn decay_constant(&self, min_separation: f64) -> f64 {
        let nodes = self.grid.nodes();
        let interior: Vec<usize> = (0..nodes.len()).filter(|&i| !self.grid.is_boundary(i)).collect();
        let norm = self.norm_sq().sqrt();
        let best = interior
            .par_iter()
            .map(|&j| {
                let mut m: f64 = 0.0;
                for &i in &interior {
                    let d = (0..3).map(|a| (nodes[i][a] - nodes[j][a]).powi(2)).sum::<f64>().sqrt();
                    if d >= min_separation {
                        m = m.max(self.values[(i, j)] * d);
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        best / norm
    }
}

/// `(2π² / (3 (2+ρ)³)) ĉ² r⁴` with `r = (2 + ρ) · max_diam`: bound on the
/// squared mass of a non-admissible block relative to `||G||²`.
pub fn non_admissible_block_factor(c_hat: f64, rho: f64, max_diam: f64) -> f64 {
    let r = (2.0 + rho) * max_diam;
    2.0 * PI * PI / (3.0 * (2.0 + rho).powi(3)) * c_hat * c_hat * r.powi(4)
}
