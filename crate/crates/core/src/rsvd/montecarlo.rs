//! Monte-Carlo verifiers. Trials run in parallel and are reduced in trial order,
//! so results do not depend on the thread count.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::bounds::{deterministic_bound, evaluate_expectation_bound};
use super::quality::covariance_capture;
use super::range::{randomized_range_with_reference, synthetic_operator};
use crate::error::{Error, Result};
use crate::gp::quasimatrix::weighted_gram;
use crate::gp::{sample_gp, Aabb, Grid, MercerBasis, Quasimatrix};
use crate::hsops::{weighted_svd, HsOperator};
use crate::rng::{derive_seed, stream_rng};

/// Threshold multipliers reported by [`pinv_norm_statistics`].
pub const PINV_T_VALUES: [f64; 4] = [1.0, 1.5, 2.0, 3.0];
/// Threshold multipliers reported by [`omega2_tail_check`].
pub const OMEGA_S_VALUES: [f64; 3] = [1.2, 1.5, 2.0];

/// One point of an exceedance curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExceedancePoint {
    pub parameter: f64,
    pub threshold: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
}

impl ExceedancePoint {
    fn new(parameter: f64, threshold: f64, values: &[f64], bound: f64) -> Self {
        let hits = values.iter().filter(|&&v| v > threshold).count();
        let n = values.len() as f64;
        let p = hits as f64 / n;
        ExceedancePoint { parameter, threshold, empirical: p, std_error: (p * (1.0 - p) / n).sqrt(), bound }
    }

    /// `empirical ≤ bound + 3 SE`.
    pub fn holds(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.std_error
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    let var = if values.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(Error::InvalidParameter(format!("need at least two trials, got {trials}")));
    }
    Ok(())
}

/// Statistics of `||Ω_1^†||_F^2 = Tr((Ω_1 Ω_1^*)^{-1})` for `k × ℓ` matrices
/// with independent `N(0, C)` columns.
#[derive(Clone, Debug, Serialize)]
pub struct PinvStatistics {
    pub k: usize,
    pub l: usize,
    pub trials: usize,
    pub mean_sq_pinv_norm: f64,
    pub std_error: f64,
    /// `Tr(C^{-1}) / (ℓ − k − 1)`.
    pub expected_mean: f64,
    /// Exceedance of `3 Tr(C^{-1}) / (ℓ − k + 1) · t²`, bounded by `t^{-(ℓ-k)}`.
    pub exceedance: Vec<ExceedancePoint>,
}

pub fn pinv_norm_statistics(c: &DMatrix<f64>, k: usize, l: usize, trials: usize, seed: u64) -> Result<PinvStatistics> {
    if c.nrows() != k || c.ncols() != k || k == 0 {
        return Err(Error::InvalidParameter(format!("C must be {k}x{k}, got {}x{}", c.nrows(), c.ncols())));
    }
    if l < k + 2 {
        return Err(Error::InvalidParameter(format!("need l - k >= 2, got k = {k}, l = {l}")));
    }
    check_trials(trials)?;
    let chol = Cholesky::new(c.clone()).ok_or_else(|| Error::InvalidParameter("C is not positive definite".into()))?;
    let tr_c_inv = chol.inverse().trace();
    let lower = chol.l();

    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let z = DMatrix::from_fn(k, l, |_, _| StandardNormal.sample(&mut rng));
            let o = &lower * z;
            match Cholesky::new(&o * o.transpose()) {
                Some(a) => a.inverse().trace(),
                None => f64::INFINITY,
            }
        })
        .collect();

    let (mean, se) = mean_and_se(&values);
    let base = 3.0 * tr_c_inv / (l - k + 1) as f64;
    let exceedance = PINV_T_VALUES
        .iter()
        .map(|&t| ExceedancePoint::new(t, base * t * t, &values, t.powi(-((l - k) as i32))))
        .collect();
    Ok(PinvStatistics {
        k,
        l,
        trials,
        mean_sq_pinv_norm: mean,
        std_error: se,
        expected_mean: tr_c_inv / (l - k - 1) as f64,
        exceedance,
    })
}

/// Exceedance of `||Ω||²_HS > ℓ s² Tr(K)` for `ℓ`-column GP samples.
#[derive(Clone, Debug, Serialize)]
pub struct TailCheck {
    pub l: usize,
    pub trials: usize,
    pub mean_hs_sq: f64,
    pub std_error: f64,
    /// `ℓ Tr(K)`.
    pub expected_mean: f64,
    pub exceedance: Vec<ExceedancePoint>,
}

pub fn omega2_tail_check(basis: &MercerBasis, l: usize, trials: usize, seed: u64) -> Result<TailCheck> {
    if l < 1 {
        return Err(Error::InvalidParameter("need at least one column".into()));
    }
    check_trials(trials)?;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| sample_gp(basis, l, derive_seed(seed, i as u64)).map(|q| q.hs_norm_sq()))
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&values);
    let tr = basis.trace();
    let exceedance = OMEGA_S_VALUES
        .iter()
        .map(|&s| {
            let bound = (s * (-(s * s - 1.0) / 2.0).exp()).powi(l as i32);
            ExceedancePoint::new(s, l as f64 * s * s * tr, &values, bound)
        })
        .collect();
    Ok(TailCheck { l, trials, mean_hs_sq: mean, std_error: se, expected_mean: l as f64 * tr, exceedance })
}

/// Monte-Carlo mean of `||Σ_2 V_2^* Ω T||²` against `λ_1 ||Σ_2||² ||T||_F²`.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyCheck {
    pub empirical_mean: f64,
    pub std_error: f64,
    pub bound: f64,
}

impl EnergyCheck {
    pub fn holds(&self) -> bool {
        self.empirical_mean <= self.bound + 3.0 * self.std_error
    }
}

/// `Ω` has `T.nrows()` columns drawn from `GP(0, K)`; `Σ_2, V_2` are the
/// singular values and right singular functions of `F` beyond index `k`.
pub fn sigma2_omega2_energy_check(
    f: &HsOperator,
    basis: &MercerBasis,
    t: &DMatrix<f64>,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<EnergyCheck> {
    check_trials(trials)?;
    crate::gp::quasimatrix::same_grid(basis.grid(), f.col_grid())?;
    let svd = weighted_svd(f)?;
    let r = svd.singular_values.len();
    if k > r {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds the operator rank bound {r}")));
    }
    let l = t.nrows();
    let v2 = svd.right.values().columns(k, r - k).into_owned();
    let s2: Vec<f64> = svd.singular_values[k..].to_vec();
    let w = f.col_grid().weights();
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let omega = sample_gp(basis, l, derive_seed(seed, i as u64))?;
            let m = weighted_gram(w, &v2, omega.values()) * t;
            Ok(m.row_iter().zip(&s2).map(|(row, s)| s * s * row.norm_squared()).sum())
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&values);
    let tail_sq: f64 = s2.iter().map(|s| s * s).sum();
    Ok(EnergyCheck { empirical_mean: mean, std_error: se, bound: basis.lambda_1() * tail_sq * t.norm_squared() })
}

/// Mean randomized-range error over seeds against the expectation bound.
#[derive(Clone, Debug, Serialize)]
pub struct ExpectationCheck {
    pub k: usize,
    pub p: usize,
    pub seeds: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub gamma_k: f64,
    pub bound: f64,
    pub best_error: f64,
}

impl ExpectationCheck {
    pub fn holds(&self) -> bool {
        self.mean_error <= self.bound
    }
}

pub fn expectation_check(
    f: &HsOperator,
    basis: &MercerBasis,
    k: usize,
    p: usize,
    seeds: usize,
    seed: u64,
) -> Result<ExpectationCheck> {
    check_trials(seeds)?;
    let svd = weighted_svd(f)?;
    let v1 = Quasimatrix::new(Arc::clone(f.col_grid()), svd.right.values().columns(0, k).into_owned())?;
    let gamma_k = covariance_capture(basis, &v1)?.gamma_k;
    let bound = evaluate_expectation_bound(svd.tail(k), gamma_k, k, p)?;
    let errors: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            randomized_range_with_reference(f, f, basis, k, p, derive_seed(seed, i as u64))
                .map(|r| r.achieved_error.expect("reference supplied"))
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&errors);
    Ok(ExpectationCheck { k, p, seeds, mean_error: mean, std_error: se, gamma_k, bound, best_error: svd.tail(k + p) })
}

/// Outcome of [`deterministic_bound_suite`].
#[derive(Clone, Debug, Serialize)]
pub struct DeterministicSuite {
    pub draws: usize,
    pub holds: usize,
    /// `min (rhs − lhs) / rhs` over draws.
    pub worst_relative_slack: f64,
}

/// Random operators (sizes up to 24, geometric or random spectra) and random
/// Gaussian test matrices, checking the deterministic bound on every draw.
pub fn deterministic_bound_suite(draws: usize, seed: u64) -> Result<DeterministicSuite> {
    let outcomes: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let m = rng.random_range(6..=24usize);
            let n = rng.random_range(6..=24usize);
            let r = m.min(n);
            let k = rng.random_range(1..=r.min(8));
            let l = rng.random_range(k..=(k + 6).min(n));
            let decay: f64 = rng.random_range(0.2..0.95);
            let dim_x = Arc::new(Grid::uniform(Aabb::unit(1), m)?);
            let dim_y = Arc::new(Grid::uniform(Aabb::new(&[-1.0], &[2.0])?, n)?);
            let s: Vec<f64> = (0..r).map(|j| decay.powi(j as i32) * rng.random_range(0.5..1.0)).collect();
            let mut s = s;
            s.sort_by(|a, b| b.total_cmp(a));
            let f = synthetic_operator(&dim_x, &dim_y, &s, rng.random())?;
            let omega = Quasimatrix::new(
                Arc::clone(&dim_y),
                DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng)),
            )?;
            let (lhs, rhs) = deterministic_bound(&f, &omega, k)?;
            Ok(if rhs > 0.0 { (rhs - lhs) / rhs } else { -lhs })
        })
        .collect::<Result<_>>()?;
    let holds = outcomes.iter().filter(|&&x| x >= -1e-8).count();
    let worst = outcomes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DeterministicSuite { draws, holds, worst_relative_slack: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{build_mercer, CovKernelSpec, DEFAULT_RANK_CUTOFF};

    fn se_basis(n: usize, l: f64) -> MercerBasis {
        let g = Arc::new(Grid::uniform(Aabb::unit(1), n).unwrap());
        build_mercer(&CovKernelSpec::squared_exponential(l).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap()
    }

    #[test]
    fn pinv_mean_for_diagonal_covariance() {
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.25]));
        let st = pinv_norm_statistics(&c, 2, 8, 10_000, 5).unwrap();
        assert!((st.expected_mean - 1.0).abs() < 1e-12);
        assert!((st.mean_sq_pinv_norm / st.expected_mean - 1.0).abs() < 0.05);
        assert!(st.exceedance.iter().all(|e| e.holds()));
    }

    #[test]
    fn pinv_is_reproducible() {
        let c = DMatrix::identity(3, 3);
        let a = pinv_norm_statistics(&c, 3, 7, 200, 9).unwrap();
        let b = pinv_norm_statistics(&c, 3, 7, 200, 9).unwrap();
        assert_eq!(a.mean_sq_pinv_norm, b.mean_sq_pinv_norm);
        assert!(pinv_norm_statistics(&c, 3, 4, 200, 9).is_err());
    }

    #[test]
    fn omega_tail_mean_matches_trace() {
        let b = se_basis(64, 0.2);
        let tc = omega2_tail_check(&b, 8, 4000, 2).unwrap();
        assert!((tc.mean_hs_sq / tc.expected_mean - 1.0).abs() < 0.05);
        assert!(tc.exceedance.iter().all(|e| e.holds()));
        // s = 1 bound is 1
        assert_eq!((1.0f64 * (0.0f64).exp()).powi(8), 1.0);
    }

    #[test]
    fn energy_check_trivial_cases() {
        let b = se_basis(16, 0.3);
        let g = Arc::clone(b.grid());
        let f = synthetic_operator(&g, &g, &[1.0, 0.5, 0.25], 3).unwrap();
        // Σ_2 = 0 beyond the exact rank
        let e = sigma2_omega2_energy_check(&f, &b, &DMatrix::from_element(6, 3, 1.0), 3, 50, 1).unwrap();
        assert!(e.empirical_mean < 1e-25 && e.bound < 1e-25);
        let e = sigma2_omega2_energy_check(&f, &b, &DMatrix::zeros(6, 3), 1, 50, 1).unwrap();
        assert_eq!((e.empirical_mean, e.bound), (0.0, 0.0));
    }

    #[test]
    fn energy_check_random_operator() {
        let b = se_basis(16, 0.3);
        let g = Arc::clone(b.grid());
        let s: Vec<f64> = (0..16).map(|j| 0.8f64.powi(j)).collect();
        let f = synthetic_operator(&g, &g, &s, 8).unwrap();
        let t = DMatrix::from_fn(6, 3, |i, j| ((i + 2 * j) % 4) as f64 - 1.5);
        let e = sigma2_omega2_energy_check(&f, &b, &t, 3, 5000, 4).unwrap();
        assert!(e.holds(), "{e:?}");
    }

    #[test]
    fn deterministic_suite_small() {
        let s = deterministic_bound_suite(100, 1).unwrap();
        assert_eq!(s.holds, 100, "{s:?}");
    }
}
