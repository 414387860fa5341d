use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gp::Grid;

/// Diffusion tensor `A(x)` of `−∇·(A ∇u)`.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientField {
    Identity,
    /// Constant `diag(a_1, a_2, a_3)`; entries beyond the grid dimension are ignored.
    Diagonal([f64; 3]),
    /// `(1 + ½ sin(π x_1)) I`.
    Sinusoidal,
    /// One symmetric matrix per node of the assembly grid.
    Tabulated(Vec<[[f64; 3]; 3]>),
}

impl CoefficientField {
    /// Full tensor at a node.
    pub fn tensor(&self, grid: &Grid, node: usize) -> Result<[[f64; 3]; 3]> {
        let diag = |d: [f64; 3]| [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]];
        Ok(match self {
            CoefficientField::Identity => diag([1.0; 3]),
            CoefficientField::Diagonal(d) => diag(*d),
            CoefficientField::Sinusoidal => {
                let a = 1.0 + 0.5 * (PI * grid.nodes()[node][0]).sin();
                diag([a; 3])
            }
            CoefficientField::Tabulated(t) => {
                if t.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "coefficient table has {} nodes, grid has {}",
                        t.len(),
                        grid.len()
                    )));
                }
                t[node]
            }
        })
    }

    /// Eigenvalues of the leading `dim × dim` block at a node, checking symmetry.
    pub fn eigenvalues(&self, grid: &Grid, node: usize) -> Result<Vec<f64>> {
        let a = self.tensor(grid, node)?;
        let dim = grid.dim();
        for i in 0..dim {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * (a[i][i].abs() + a[j][j].abs()) {
                    return Err(Error::UnsupportedCoefficient(format!("A is not symmetric at node {node}")));
                }
            }
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| a[i][j]);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Diagonal of `A` at a node after checking that `A` is SPD there and has
    /// no off-diagonal part (the stencil handles diagonal tensors only).
    pub fn diagonal(&self, grid: &Grid, node: usize) -> Result<[f64; 3]> {
        let ev = self.eigenvalues(grid, node)?;
        if !(ev[0] > 0.0) {
            return Err(Error::CoefficientNotSpd { node, eigenvalue: ev[0] });
        }
        let a = self.tensor(grid, node)?;
        let dim = grid.dim();
        for i in 0..dim {
            for j in 0..dim {
                if i != j && a[i][j] != 0.0 {
                    return Err(Error::UnsupportedCoefficient(format!(
                        "off-diagonal entry A[{i}][{j}] = {} at node {node}",
                        a[i][j]
                    )));
                }
            }
        }
        Ok([a[0][0], a[1][1], a[2][2]])
    }
}

impl FromStr for CoefficientField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CoefficientField::Identity),
            "sinusoidal" => Ok(CoefficientField::Sinusoidal),
            _ => {
                let rest = s
                    .strip_prefix("diag:")
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown coefficient preset '{s}'")))?;
                let vals = rest
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::InvalidParameter(format!("bad diagonal '{rest}': {e}")))?;
                if vals.is_empty() || vals.len() > 3 {
                    return Err(Error::InvalidParameter(format!("diag needs 1 to 3 entries, got {}", vals.len())));
                }
                let mut d = [1.0; 3];
                d[..vals.len()].copy_from_slice(&vals);
                Ok(CoefficientField::Diagonal(d))
            }
        }
    }
}

impl fmt::Display for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Identity => write!(f, "identity"),
            CoefficientField::Diagonal(d) => write!(f, "diag:{},{},{}", d[0], d[1], d[2]),
            CoefficientField::Sinusoidal => write!(f, "sinusoidal"),
            CoefficientField::Tabulated(_) => write!(f, "tabulated"),
        }
    }
}

/// `sup_x λ_max(A(x)) / inf_x λ_min(A(x))` over the grid nodes.
pub fn kappa_c(coeff: &CoefficientField, grid: &Grid) -> Result<f64> {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for node in 0..grid.len() {
        let ev = coeff.eigenvalues(grid, node)?;
        lo = lo.min(ev[0]);
        hi = hi.max(*ev.last().expect("dim >= 1"));
    }
    Ok(hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Aabb;

    #[test]
    fn presets() {
        let g = Grid::uniform(Aabb::unit(3), 5).unwrap();
        assert_eq!(kappa_c(&CoefficientField::Identity, &g).unwrap(), 1.0);
        assert_eq!(kappa_c(&"diag:4,1,1".parse().unwrap(), &g).unwrap(), 4.0);
        let s = Grid::uniform(Aabb::new(&[-1.0], &[1.0]).unwrap(), 9).unwrap();
        assert!((kappa_c(&CoefficientField::Sinusoidal, &s).unwrap() - 3.0).abs() < 1e-14);
        let u = Grid::uniform(Aabb::unit(1), 9).unwrap();
        assert!((kappa_c(&CoefficientField::Sinusoidal, &u).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("diag:2,3".parse::<CoefficientField>().unwrap(), CoefficientField::Diagonal([2.0, 3.0, 1.0]));
        assert!("diag:".parse::<CoefficientField>().is_err());
        assert!("foo".parse::<CoefficientField>().is_err());
        assert_eq!(CoefficientField::Sinusoidal.to_string(), "sinusoidal");
    }

    #[test]
    fn validation() {
        let g = Grid::uniform(Aabb::unit(2), 3).unwrap();
        let mut t = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]; 9];
        t[4] = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let c = CoefficientField::Tabulated(t.clone());
        assert!(matches!(c.diagonal(&g, 4), Err(Error::CoefficientNotSpd { node: 4, .. })));
        t[4] = [[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let c = CoefficientField::Tabulated(t);
        assert!(matches!(c.diagonal(&g, 4), Err(Error::UnsupportedCoefficient(_))));
        assert!((kappa_c(&c, &g).unwrap() - 2.5).abs() < 1e-14);
    }
}
