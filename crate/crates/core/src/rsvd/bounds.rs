use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::gp::quasimatrix::{same_grid, weighted_gram};
use crate::gp::Quasimatrix;
use crate::hsops::{orthonormalize, project_rows, weighted_svd, BlackBox, HsOperator};

/// Relative threshold below which `Ω_1` is declared rank deficient.
const RANK_TOL: f64 = 1e-12;

fn check_gamma(gamma_k: f64) -> Result<()> {
    if !(gamma_k > 0.0 && gamma_k <= 1.0 + 1e-10) {
        return Err(Error::InvalidParameter(format!("gamma_k must lie in (0, 1], got {gamma_k}")));
    }
    Ok(())
}

/// `(1 + sqrt(k (k + p) / (γ_k (p − 1)))) · sv_tail`.
pub fn evaluate_expectation_bound(sv_tail: f64, gamma_k: f64, k: usize, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("expectation bound needs p >= 2, got {p}")));
    }
    check_gamma(gamma_k)?;
    let (k, p) = (k as f64, p as f64);
    Ok((1.0 + (k * (k + p) / (gamma_k * (p - 1.0))).sqrt()) * sv_tail)
}

/// Tail bound and its failure probability:
/// `sqrt(1 + t² s² (3/γ_k) k(k+p)/(p+1) · trace_ratio) · sv_tail`, failing with
/// probability at most `t^{-p} + (s e^{-(s²-1)/2})^{k+p}`.
pub fn evaluate_probability_bound(
    sv_tail: f64,
    gamma_k: f64,
    k: usize,
    p: usize,
    s: f64,
    t: f64,
    trace_ratio: f64,
) -> Result<(f64, f64)> {
    if p < 4 {
        return Err(Error::InvalidParameter(format!("probability bound needs p >= 4, got {p}")));
    }
    check_gamma(gamma_k)?;
    if !(s >= 1.0 && t >= 1.0) {
        return Err(Error::InvalidParameter(format!("need s, t >= 1, got s = {s}, t = {t}")));
    }
    if !(trace_ratio > 0.0) {
        return Err(Error::InvalidParameter(format!("trace ratio must be positive, got {trace_ratio}")));
    }
    let (kf, pf) = (k as f64, p as f64);
    let factor = (1.0 + t * t * s * s * (3.0 / gamma_k) * (kf * (kf + pf) / (pf + 1.0)) * trace_ratio).sqrt();
    let fail = t.powf(-pf) + (s * (-(s * s - 1.0) / 2.0).exp()).powi((k + p) as i32);
    Ok((factor * sv_tail, fail))
}

/// Both sides of `||F − P_Y F||² ≤ ||Σ_2||² + ||Σ_2 Ω_2 Ω_1^†||²` for
/// `Y = F Ω`, with `Ω_1 = V_1^* Ω`, `Ω_2 = V_2^* Ω` from the weighted SVD of `F`.
pub fn deterministic_bound(f: &HsOperator, omega: &Quasimatrix, k: usize) -> Result<(f64, f64)> {
    same_grid(omega.grid(), f.col_grid())?;
    let l = omega.count();
    let svd = weighted_svd(f)?;
    let r = svd.singular_values.len();
    if k < 1 || k > r || k > l {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k <= min(rank {r}, columns {l}), got k = {k}"
        )));
    }

    let y = f.apply_columns(omega)?;
    let q = orthonormalize(&y);
    let lhs = if q.count() == 0 { f.hs_norm_sq() } else { f.sub(&project_rows(f, &q)?)?.hs_norm_sq() };

    let w = f.col_grid().weights();
    let v = svd.right.values();
    let omega1 = weighted_gram(w, &v.columns(0, k).into_owned(), omega.values());
    let omega2 = weighted_gram(w, &v.columns(k, r - k).into_owned(), omega.values());

    let o1 = SVD::try_new(omega1, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("SVD of Omega_1 did not converge".into()))?;
    let smax = o1.singular_values.max();
    let smin = o1.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient { smallest: smin });
    }
    // Ω_1^† = V S^{-1} U^T (ℓ × k).
    let u = o1.u.as_ref().expect("requested U");
    let vt = o1.v_t.as_ref().expect("requested V^T");
    let mut vs = vt.transpose();
    for (j, s) in o1.singular_values.iter().enumerate() {
        vs.column_mut(j).scale_mut(1.0 / s);
    }
    let pinv = vs * u.transpose();

    let tail: DMatrix<f64> = omega2 * pinv;
    let mut extra = 0.0;
    for i in 0..r - k {
        let s = svd.singular_values[k + i];
        extra += s * s * tail.row(i).norm_squared();
    }
    let rhs = svd.tail(k).powi(2) + extra;
    Ok((lhs, rhs))
}
