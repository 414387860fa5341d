use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::quasimatrix::same_grid;
use crate::gp::{sample_gp, Grid, MercerBasis, Quasimatrix};
use crate::hsops::{orthonormal_basis_full, orthonormalize, project_rows, BlackBox, HsOperator};

/// Output of [`randomized_range`].
#[derive(Clone, Debug)]
pub struct RangeResult {
    /// GP test functions `Ω`, `k + p` columns on the input grid.
    pub test_functions: Quasimatrix,
    /// `Y = F Ω` on the output grid.
    pub images: Quasimatrix,
    /// Orthonormal basis of `span(Y)`.
    pub basis: Quasimatrix,
    /// `||F − P_Y F||_HS`, only when a reference operator was supplied.
    pub achieved_error: Option<f64>,
    pub queries_used: usize,
}

/// Sample `k + p` functions from `GP(0, K)`, push them through the black box and
/// orthonormalize the images.
pub fn randomized_range(op: &dyn BlackBox, basis: &MercerBasis, k: usize, p: usize, seed: u64) -> Result<RangeResult> {
    if k < 1 {
        return Err(Error::InvalidParameter("target rank k must be at least 1".into()));
    }
    if p < 2 {
        return Err(Error::InvalidParameter(format!("oversampling p must be at least 2, got {p}")));
    }
    same_grid(basis.grid(), op.input_grid())?;
    let omega = sample_gp(basis, k + p, seed)?;
    let mut cols = Vec::with_capacity(k + p);
    for j in 0..k + p {
        let y = op.apply(&omega.column(j)).map_err(|e| Error::Oracle {
            block: format!("range finder, test function {j}"),
            source: Box::new(e),
        })?;
        cols.push(y);
    }
    let images = Quasimatrix::from_columns(Arc::clone(op.output_grid()), &cols)?;
    let q = orthonormalize(&images);
    Ok(RangeResult { test_functions: omega, images, basis: q, achieved_error: None, queries_used: k + p })
}

/// [`randomized_range`] that also measures `||F − P_Y F||_HS` against a dense
/// copy of the operator behind the black box.
pub fn randomized_range_with_reference(
    op: &dyn BlackBox,
    reference: &HsOperator,
    basis: &MercerBasis,
    k: usize,
    p: usize,
    seed: u64,
) -> Result<RangeResult> {
    let mut r = randomized_range(op, basis, k, p, seed)?;
    let err = if r.basis.count() == 0 {
        reference.hs_norm()
    } else {
        reference.sub(&project_rows(reference, &r.basis)?)?.hs_norm()
    };
    r.achieved_error = Some(err);
    Ok(r)
}

fn random_orthonormal(grid: &Arc<Grid>, count: usize, rng: &mut ChaCha12Rng) -> Result<Quasimatrix> {
    let n = grid.len();
    let g = DMatrix::from_fn(n, count, |_, _| StandardNormal.sample(rng));
    Ok(orthonormal_basis_full(&Quasimatrix::new(Arc::clone(grid), g)?))
}

/// Operator `Σ_j σ_j u_j(x) v_j(y)` with random singular functions that are
/// orthonormal in the grid quadrature.
pub fn synthetic_operator(
    row_grid: &Arc<Grid>,
    col_grid: &Arc<Grid>,
    singular_values: &[f64],
    seed: u64,
) -> Result<HsOperator> {
    let r = singular_values.len();
    if r > row_grid.len().min(col_grid.len()) {
        return Err(Error::InvalidParameter(format!(
            "{r} singular values do not fit a {}x{} operator",
            row_grid.len(),
            col_grid.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let u = random_orthonormal(row_grid, r, &mut rng)?;
    let v = random_orthonormal(col_grid, r, &mut rng)?;
    let mut us = u.into_values();
    for (j, s) in singular_values.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    HsOperator::new(Arc::clone(row_grid), Arc::clone(col_grid), us * v.values().transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{build_mercer, Aabb, CovKernelSpec, DEFAULT_RANK_CUTOFF};
    use crate::hsops::weighted_svd;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(Aabb::unit(1), n).unwrap())
    }

    #[test]
    fn synthetic_operator_has_prescribed_spectrum() {
        let s: Vec<f64> = (1..=6).map(|j| 2f64.powi(-j)).collect();
        let op = synthetic_operator(&grid(12), &grid(10), &s, 4).unwrap();
        let svd = weighted_svd(&op).unwrap();
        for (a, b) in svd.singular_values.iter().zip(&s) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(svd.singular_values[6] < 1e-13);
    }

    #[test]
    fn exact_rank_operator_is_captured() {
        let g = grid(24);
        let basis = build_mercer(&CovKernelSpec::squared_exponential(0.1).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        let op = synthetic_operator(&g, &g, &[1.0, 0.5, 0.3], 2).unwrap();
        let r = randomized_range_with_reference(&op, &op, &basis, 3, 2, 11).unwrap();
        assert_eq!(r.queries_used, 5);
        assert_eq!(r.images.count(), 5);
        assert!(r.achieved_error.unwrap() <= 1e-8 * op.hs_norm());
    }

    #[test]
    fn zero_operator() {
        let g = grid(10);
        let basis = build_mercer(&CovKernelSpec::squared_exponential(0.2).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        let op = HsOperator::new(Arc::clone(&g), Arc::clone(&g), DMatrix::zeros(10, 10)).unwrap();
        let r = randomized_range_with_reference(&op, &op, &basis, 2, 2, 0).unwrap();
        assert_eq!(r.achieved_error, Some(0.0));
        assert_eq!(r.basis.count(), 0);
    }

    #[test]
    fn cannot_beat_best_approximation() {
        let g = grid(20);
        let basis = build_mercer(&CovKernelSpec::squared_exponential(0.05).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        let s: Vec<f64> = (0..20).map(|j| 0.7f64.powi(j)).collect();
        let op = synthetic_operator(&g, &g, &s, 9).unwrap();
        let svd = weighted_svd(&op).unwrap();
        for seed in 0..20 {
            let r = randomized_range_with_reference(&op, &op, &basis, 3, 3, seed).unwrap();
            assert!(r.basis.count() <= 6);
            assert!(r.achieved_error.unwrap() >= svd.tail(6) - 1e-10);
        }
    }

    #[test]
    fn preconditions() {
        let g = grid(8);
        let basis = build_mercer(&CovKernelSpec::squared_exponential(0.2).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        let op = HsOperator::new(Arc::clone(&g), Arc::clone(&g), DMatrix::identity(8, 8)).unwrap();
        assert!(randomized_range(&op, &basis, 0, 2, 0).is_err());
        assert!(randomized_range(&op, &basis, 2, 1, 0).is_err());
        let other = grid(9);
        let op2 = HsOperator::new(Arc::clone(&g), other, DMatrix::zeros(8, 9)).unwrap();
        assert!(randomized_range(&op2, &basis, 2, 2, 0).is_err());
    }

    struct Failing(Arc<Grid>);
    impl BlackBox for Failing {
        fn input_grid(&self) -> &Arc<Grid> {
            &self.0
        }
        fn output_grid(&self) -> &Arc<Grid> {
            &self.0
        }
        fn apply(&self, _f: &nalgebra::DVector<f64>) -> Result<nalgebra::DVector<f64>> {
            Err(Error::SolverBreakdown("boom".into()))
        }
    }

    #[test]
    fn oracle_failure_carries_context() {
        let g = grid(8);
        let basis = build_mercer(&CovKernelSpec::squared_exponential(0.2).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        let e = randomized_range(&Failing(Arc::clone(&g)), &basis, 2, 2, 0).unwrap_err();
        assert!(matches!(e, Error::Oracle { .. }));
        assert!(e.to_string().contains("boom"));
    }
}
