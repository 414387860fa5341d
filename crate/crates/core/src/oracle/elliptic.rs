use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::DVector;

use super::banded::BandedCholesky;
use super::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::gp::Grid;
use crate::hsops::BlackBox;

/// Relative residual `||L u − f|| / ||f||` accepted from the direct solver.
pub const RESIDUAL_TOL: f64 = 1e-10;

const NONE: usize = usize::MAX;

/// Finite-difference solver for `−∇·(A ∇u) = f`, `u = 0` on the boundary.
#[derive(Debug)]
pub struct EllipticOracle {
    grid: Arc<Grid>,
    coeff: CoefficientField,
    /// Full-grid index of each unknown.
    interior: Vec<usize>,
    /// Unknown number of each full-grid node, `NONE` on the boundary.
    unknown: Vec<usize>,
    strides: [usize; 3],
    diag: Vec<f64>,
    /// Coupling to the `+e_a` neighbour (negative), zero when that neighbour is on the boundary.
    off: Vec<[f64; 3]>,
    factor: BandedCholesky,
    queries: AtomicUsize,
}

/// Assemble the conservative stencil and factor it.
pub fn assemble(coeff: &CoefficientField, grid: &Arc<Grid>) -> Result<EllipticOracle> {
    let dim = grid.dim();
    let shape = grid.shape();
    let mut m = [1usize; 3];
    for a in 0..dim {
        if shape[a] < 3 {
            return Err(Error::InvalidGrid(format!("axis {a} has {} nodes, no interior", shape[a])));
        }
        m[a] = shape[a] - 2;
    }
    let strides = [1, m[0], m[0] * m[1]];
    let n = m[0] * m[1] * m[2];
    let h: Vec<f64> = (0..dim).map(|a| grid.bbox().width(a) / (shape[a] - 1) as f64).collect();

    // diagonal tensor at every node, validated
    let a_at = (0..grid.len()).map(|node| coeff.diagonal(grid, node)).collect::<Result<Vec<_>>>()?;

    let mut interior = Vec::with_capacity(n);
    let mut unknown = vec![NONE; grid.len()];
    for k in 0..m[2] {
        for j in 0..m[1] {
            for i in 0..m[0] {
                let mut idx = [i + 1, 0, 0];
                if dim > 1 {
                    idx[1] = j + 1;
                }
                if dim > 2 {
                    idx[2] = k + 1;
                }
                let full = grid.flat_index(idx);
                unknown[full] = interior.len();
                interior.push(full);
            }
        }
    }

    let mut diag = vec![0.0; n];
    let mut off = vec![[0.0; 3]; n];
    for (u, &full) in interior.iter().enumerate() {
        let idx = grid.multi_index(full);
        for a in 0..dim {
            let hh = h[a] * h[a];
            for dir in [-1i64, 1] {
                let mut nb = idx;
                nb[a] = (idx[a] as i64 + dir) as usize;
                let nf = grid.flat_index(nb);
                let face = 0.5 * (a_at[full][a] + a_at[nf][a]) / hh;
                diag[u] += face;
                if dir == 1 && unknown[nf] != NONE {
                    off[u][a] = -face;
                }
            }
        }
    }

    let bw = strides[dim - 1];
    let factor = BandedCholesky::factor(n, bw, |i, j| {
        if i == j {
            return diag[i];
        }
        let d = i - j;
        (0..dim).filter(|&a| strides[a] == d).map(|a| off[j][a]).sum()
    })?;

    Ok(EllipticOracle {
        grid: Arc::clone(grid),
        coeff: coeff.clone(),
        interior,
        unknown,
        strides,
        diag,
        off,
        factor,
        queries: AtomicUsize::new(0),
    })
}

impl EllipticOracle {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coefficient(&self) -> &CoefficientField {
        &self.coeff
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// Full-grid indices of the unknowns.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn bandwidth(&self) -> usize {
        self.factor.bandwidth()
    }

    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::SeqCst)
    }

    pub fn reset_query_count(&self) {
        self.queries.store(0, Ordering::SeqCst);
    }

    /// Stencil applied to interior values.
    fn stencil(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for u in 0..x.len() {
            for a in 0..dim {
                let c = self.off[u][a];
                if c != 0.0 {
                    let v = u + self.strides[a];
                    y[u] += c * x[v];
                    y[v] += c * x[u];
                }
            }
        }
        y
    }

    /// Discrete `L u` of a full-grid function (boundary values taken as given),
    /// returned on the interior and zero on the boundary.
    pub fn apply_operator(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(u)?;
        let x: Vec<f64> = self.interior.iter().map(|&i| u[i]).collect();
        Ok(self.scatter(&self.stencil(&x)))
    }

    fn check_len(&self, f: &DVector<f64>) -> Result<()> {
        if f.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "grid function has {} values, grid has {} nodes",
                f.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    fn scatter(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.grid.len());
        for (&i, v) in self.interior.iter().zip(x) {
            out[i] = *v;
        }
        out
    }

    /// Solve without touching the query counter.
    pub fn solve_unmetered(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(f)?;
        let rhs: Vec<f64> = self.interior.iter().map(|&i| f[i]).collect();
        let mut x = rhs.clone();
        self.factor.solve_in_place(&mut x);
        let r = self.stencil(&x);
        let num = r.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
        if num > RESIDUAL_TOL * den || !num.is_finite() {
            return Err(Error::SolverBreakdown(format!("relative residual {:.3e}", num / den)));
        }
        Ok(self.scatter(&x))
    }

    /// Interior unknown number of a full-grid node.
    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        let u = self.unknown[node];
        (u != NONE).then_some(u)
    }
}

impl BlackBox for EllipticOracle {
    fn input_grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn output_grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn apply(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        self.solve_unmetered(f)
    }
}

/// Query-counting wrapper around any black box.
#[derive(Debug)]
pub struct Metered<B> {
    inner: B,
    queries: AtomicUsize,
}

impl<B: BlackBox> Metered<B> {
    pub fn new(inner: B) -> Self {
        Metered { inner, queries: AtomicUsize::new(0) }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::SeqCst)
    }
}

impl<B: BlackBox> BlackBox for Metered<B> {
    fn input_grid(&self) -> &Arc<Grid> {
        self.inner.input_grid()
    }

    fn output_grid(&self) -> &Arc<Grid> {
        self.inner.output_grid()
    }

    fn apply(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        self.inner.apply(f)
    }
}
