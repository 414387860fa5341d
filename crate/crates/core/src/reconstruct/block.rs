use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gp::{build_mercer, restrict_kernel, Aabb, CovKernelSpec, MercerBasis, Quasimatrix, SubGrid, DEFAULT_RANK_CUTOFF};
use crate::gp::sample_gp;
use crate::hsops::{orthonormal_basis_full, BlackBox};

/// Low-rank approximant `Σ_r left_r(x) right_r(y)` of `G` on `X × Y`.
#[derive(Clone, Debug)]
pub struct LowRankBlock {
    pub x: Aabb,
    pub y: Aabb,
    /// Factors on the nodes owned by `X`.
    pub left: Arc<Quasimatrix>,
    /// Factors on the nodes owned by `Y`.
    pub right: Arc<Quasimatrix>,
    /// Parent-grid indices of the rows of `left` (increasing).
    pub left_nodes: Arc<Vec<usize>>,
    pub right_nodes: Arc<Vec<usize>>,
    pub queries_used: usize,
}

impl LowRankBlock {
    pub fn rank(&self) -> usize {
        self.left.count()
    }

    /// `G̃` on the owned nodes, rows in `X`.
    pub fn kernel(&self) -> DMatrix<f64> {
        self.left.values() * self.right.values().transpose()
    }

    /// `G̃(x_i, y_j)` for local node numbers.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let l = self.left.values();
        let r = self.right.values();
        (0..self.rank()).map(|c| l[(i, c)] * r[(j, c)]).sum()
    }

    /// The `Y × X` block with the same factors.
    pub fn transposed(&self, queries_used: usize) -> LowRankBlock {
        LowRankBlock {
            x: self.y,
            y: self.x,
            left: Arc::clone(&self.right),
            right: Arc::clone(&self.left),
            left_nodes: Arc::clone(&self.right_nodes),
            right_nodes: Arc::clone(&self.left_nodes),
            queries_used,
        }
    }

    pub(crate) fn from_factors(x: &SubGrid, y: &SubGrid, xb: Aabb, yb: Aabb, left: Quasimatrix, right: Quasimatrix, queries_used: usize) -> Self {
        LowRankBlock {
            x: xb,
            y: yb,
            left: Arc::new(left),
            right: Arc::new(right),
            left_nodes: Arc::new(x.parent_index.clone()),
            right_nodes: Arc::new(y.parent_index.clone()),
            queries_used,
        }
    }
}

pub(crate) fn block_basis(kernel: &CovKernelSpec, grid: &Arc<crate::gp::Grid>, y: &Aabb) -> Result<MercerBasis> {
    let rk = restrict_kernel(kernel, grid, y)?;
    build_mercer(&rk.kernel, &rk.subgrid.grid, DEFAULT_RANK_CUTOFF)
}

/// Learn the `X × Y` and `Y × X` blocks of a self-adjoint operator from
/// `2(k + p)` oracle calls.
pub fn learn_block(
    oracle: &dyn BlackBox,
    kernel: &CovKernelSpec,
    x: &Aabb,
    y: &Aabb,
    k: usize,
    p: usize,
    seed: u64,
) -> Result<(LowRankBlock, LowRankBlock)> {
    let basis = block_basis(kernel, oracle.input_grid(), y)?;
    learn_block_with_basis(oracle, &basis, x, y, k, p, seed)
}

pub(crate) fn learn_block_with_basis(
    oracle: &dyn BlackBox,
    basis: &MercerBasis,
    x: &Aabb,
    y: &Aabb,
    k: usize,
    p: usize,
    seed: u64,
) -> Result<(LowRankBlock, LowRankBlock)> {
    if k < 1 || p < 2 {
        return Err(Error::InvalidParameter(format!("need k >= 1 and p >= 2, got k = {k}, p = {p}")));
    }
    let grid = oracle.input_grid();
    let sx = grid.restrict(x)?;
    let sy = grid.restrict(y)?;
    let context = |e: Error| Error::Oracle { block: format!("{x} x {y}"), source: Box::new(e) };
    let n = k + p;

    let omega = sample_gp(basis, n, seed)?;
    let images = oracle.apply_columns(&omega.extend_by_zero(&sy)?).map_err(context)?;
    let rxy = images.restrict(&sx)?;
    if rxy.values().amax() == 0.0 {
        log::warn!("oracle annihilated every sample on block {x} x {y}; storing a rank-0 block");
        let lx = Quasimatrix::empty(Arc::clone(&sx.grid));
        let ry = Quasimatrix::empty(Arc::clone(&sy.grid));
        let xy = LowRankBlock::from_factors(&sx, &sy, *x, *y, lx, ry, n);
        let yx = xy.transposed(0);
        return Ok((xy, yx));
    }
    let q = orthonormal_basis_full(&rxy);
    let z = oracle.apply_columns(&q.extend_by_zero(&sx)?).map_err(context)?.restrict(&sy)?;
    let second = q.count();
    let xy = LowRankBlock::from_factors(&sx, &sy, *x, *y, q, z, n);
    let yx = xy.transposed(second);
    Ok((xy, yx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Grid;
    use crate::hsops::HsOperator;
    use crate::oracle::Metered;

    #[test]
    fn separable_kernel_is_reproduced() {
        let g = Arc::new(Grid::uniform(Aabb::unit(1), 40).unwrap());
        let h: Vec<f64> = g.nodes().iter().map(|p| (2.0 * p[0]).exp() + p[0]).collect();
        let op = HsOperator::new(Arc::clone(&g), Arc::clone(&g), DMatrix::from_fn(40, 40, |i, j| h[i] * h[j])).unwrap();
        let oracle = Metered::new(op.clone());
        let x = Aabb::new(&[0.0], &[0.25]).unwrap();
        let y = Aabb::new(&[0.75], &[1.0]).unwrap();
        let kernel = CovKernelSpec::squared_exponential(0.1).unwrap();
        let (xy, yx) = learn_block(&oracle, &kernel, &x, &y, 1, 2, 3).unwrap();
        assert_eq!(oracle.query_count(), 6);
        assert_eq!(xy.queries_used + yx.queries_used, 6);
        let truth = DMatrix::from_fn(xy.left_nodes.len(), xy.right_nodes.len(), |i, j| op.kernel()[(xy.left_nodes[i], xy.right_nodes[j])]);
        assert!((xy.kernel() - &truth).norm() <= 1e-8 * truth.norm());
        assert_eq!(yx.kernel(), xy.kernel().transpose());
        assert_eq!(xy.value(2, 3), xy.kernel()[(2, 3)]);
    }

    #[test]
    fn zero_operator_gives_rank_zero() {
        let g = Arc::new(Grid::uniform(Aabb::unit(1), 20).unwrap());
        let op = Metered::new(HsOperator::new(Arc::clone(&g), Arc::clone(&g), DMatrix::zeros(20, 20)).unwrap());
        let x = Aabb::new(&[0.0], &[0.25]).unwrap();
        let y = Aabb::new(&[0.5], &[0.75]).unwrap();
        let (xy, _) = learn_block(&op, &CovKernelSpec::squared_exponential(0.2).unwrap(), &x, &y, 2, 2, 0).unwrap();
        assert_eq!(xy.rank(), 0);
        assert_eq!(xy.kernel(), DMatrix::zeros(5, 5));
    }
}
