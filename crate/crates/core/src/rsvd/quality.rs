use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gp::quasimatrix::{same_grid, weighted_gram};
use crate::gp::{MercerBasis, Quasimatrix};

/// Eigenvalue floor for `C`, relative to `λ_1`.
pub const COVARIANCE_FLOOR: f64 = 1e-14;

const ORTHONORMAL_TOL: f64 = 1e-8;

/// How well a covariance kernel sees a set of `k` orthonormal functions.
#[derive(Clone, Debug)]
pub struct KernelQuality {
    /// `C_ij = ∫∫ v_i(x) K(x, y) v_j(y)`.
    pub c: DMatrix<f64>,
    /// `k / (λ_1 Tr(C^{-1}))`.
    pub gamma_k: f64,
    pub k: usize,
    pub lambda_1: f64,
}

/// Covariance-capture matrix of `v` under the kernel of `basis` and the
/// resulting quality factor.
pub fn covariance_capture(basis: &MercerBasis, v: &Quasimatrix) -> Result<KernelQuality> {
    same_grid(basis.grid(), v.grid())?;
    let k = v.count();
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one function".into()));
    }
    let w = basis.grid().weights();
    let gram = weighted_gram(w, v.values(), v.values());
    let dev = (&gram - DMatrix::identity(k, k)).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(Error::InvalidParameter(format!("functions are not orthonormal (Gram deviation {dev:.3e})")));
    }

    // P_{n,i} = <ψ_n, v_i>; C = P^T Λ P.
    let p = weighted_gram(w, basis.eigenfunctions(), v.values());
    let mut lp = p.clone();
    for (n, lam) in basis.eigenvalues().iter().enumerate() {
        lp.row_mut(n).scale_mut(*lam);
    }
    let c = p.transpose() * lp;
    let c = (&c + c.transpose()) * 0.5;

    let lambda_1 = basis.lambda_1();
    let floor = COVARIANCE_FLOOR * lambda_1;
    let eig = SymmetricEigen::try_new(c.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("eigen-solve of C did not converge".into()))?;
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > floor) {
        return Err(Error::SingularCovariance { eigenvalue: smallest, floor });
    }
    let tr_inv: f64 = eig.eigenvalues.iter().map(|m| 1.0 / m).sum();
    Ok(KernelQuality { c, gamma_k: k as f64 / (lambda_1 * tr_inv), k, lambda_1 })
}

/// `(1/k) Σ_{j ≤ k} λ_1/λ_j`, a lower bound on `1/γ_k` for any `k` functions.
pub fn gamma_lower_sum(basis: &MercerBasis, k: usize) -> f64 {
    gamma_upper_sum(basis, k, 0)
}

/// `(1/k) Σ_{j=m+1}^{k+m} λ_1/λ_j`, an upper bound on `1/γ_k` when the functions
/// lie in the span of the first `k + m` eigenfunctions.
pub fn gamma_upper_sum(basis: &MercerBasis, k: usize, m: usize) -> f64 {
    let lam = basis.eigenvalues();
    if k + m > lam.len() {
        return f64::INFINITY;
    }
    lam[m..m + k].iter().map(|l| lam[0] / l).sum::<f64>() / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{build_mercer, Aabb, CovKernelSpec, Grid, DEFAULT_RANK_CUTOFF};
    use nalgebra::QR;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn se_basis(n: usize, l: f64) -> MercerBasis {
        let g = Arc::new(Grid::uniform(Aabb::unit(1), n).unwrap());
        build_mercer(&CovKernelSpec::squared_exponential(l).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap()
    }

    fn leading(basis: &MercerBasis, k: usize) -> Quasimatrix {
        Quasimatrix::new(Arc::clone(basis.grid()), basis.eigenfunctions().columns(0, k).into_owned()).unwrap()
    }

    fn rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        QR::new(DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng))).q()
    }

    #[test]
    fn eigenfunctions_give_diagonal_c() {
        let b = se_basis(40, 0.3);
        let q = covariance_capture(&b, &leading(&b, 4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { b.eigenvalues()[i] } else { 0.0 };
                assert!((q.c[(i, j)] - want).abs() < 1e-12 * b.lambda_1());
            }
        }
        let want = 4.0 / b.eigenvalues()[..4].iter().map(|l| b.lambda_1() / l).sum::<f64>();
        assert!((q.gamma_k - want).abs() < 1e-10 * want);
        assert!((1.0 / q.gamma_k - gamma_lower_sum(&b, 4)).abs() < 1e-8);
    }

    #[test]
    fn invariant_under_remixing() {
        let b = se_basis(40, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = leading(&b, 5).mul_matrix(&rotation(5, &mut rng));
        let g1 = covariance_capture(&b, &leading(&b, 5)).unwrap().gamma_k;
        let g2 = covariance_capture(&b, &v).unwrap().gamma_k;
        assert!((g1 - g2).abs() <= 1e-10);
    }

    #[test]
    fn flat_spectrum_gives_unit_gamma() {
        let g = Arc::new(Grid::uniform(Aabb::unit(1), 12).unwrap());
        let t = DMatrix::from_fn(12, 12, |i, j| if i == j { 1.0 / g.weights()[i] } else { 0.0 });
        let b = build_mercer(&CovKernelSpec::tabulated(t).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        let q = covariance_capture(&b, &leading(&b, 5)).unwrap();
        assert!((q.gamma_k - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn sandwich_for_rotated_functions() {
        let b = se_basis(64, 0.2);
        let (k, m) = (4, 3);
        let span = leading(&b, k + m);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let r = rotation(k + m, &mut rng).columns(0, k).into_owned();
            let v = span.mul_matrix(&r);
            let inv = 1.0 / covariance_capture(&b, &v).unwrap().gamma_k;
            assert!(inv >= gamma_lower_sum(&b, k) - 1e-8);
            assert!(inv <= gamma_upper_sum(&b, k, m) * (1.0 + 1e-8));
        }
    }

    #[test]
    fn orthogonal_complement_is_singular() {
        let g = Arc::new(Grid::uniform(Aabb::unit(1), 9).unwrap());
        let b = build_mercer(&CovKernelSpec::tabulated(DMatrix::from_element(9, 9, 1.0)).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
        // rank-1 kernel cannot see two directions
        let f: Vec<f64> = g.nodes().iter().map(|p| p[0]).collect();
        let probe = Quasimatrix::from_columns(
            Arc::clone(&g),
            &[nalgebra::DVector::from_element(9, 1.0), nalgebra::DVector::from_vec(f)],
        )
        .unwrap();
        let v = crate::hsops::orthonormalize(&probe);
        assert!(matches!(covariance_capture(&b, &v), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn rejects_non_orthonormal_input() {
        let b = se_basis(10, 0.3);
        let v = leading(&b, 2).mul_matrix(&DMatrix::from_element(2, 2, 1.0));
        assert!(covariance_capture(&b, &v).is_err());
    }
}
