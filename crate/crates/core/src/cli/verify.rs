use std::sync::Arc;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector, QR};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::output::fmt;
use crate::error::Result;
use crate::gp::{build_mercer, Aabb, CovKernelSpec, Grid, MercerBasis, Quasimatrix, DEFAULT_RANK_CUTOFF};
use crate::hsops::HsOperator;
use crate::rng::derive_seed;
use crate::rsvd::{
    covariance_capture, deterministic_bound_suite, expectation_check, gamma_lower_sum, gamma_upper_sum,
    omega2_tail_check, pinv_norm_statistics, randomized_range_with_reference, sigma2_omega2_energy_check,
    synthetic_operator, ExceedancePoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Deterministic,
    Pinv,
    Tail,
    Chernoff,
    Expectation,
    Gamma,
    Energy,
    Monotone,
}

/// One line of the `verify-bounds` CSV.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub name: String,
    pub parameters: String,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundRow {
    fn new(name: &str, parameters: String, empirical: f64, bound: f64, pass: bool) -> Self {
        BoundRow { name: name.to_string(), parameters, empirical, bound, pass }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.name.clone(),
            self.parameters.clone(),
            fmt(self.empirical),
            fmt(self.bound),
            if self.pass { "pass" } else { "fail" }.to_string(),
        ]
    }
}

fn exceedance_row(name: &str, params: &str, e: &ExceedancePoint) -> BoundRow {
    BoundRow::new(name, format!("{params};param={}", e.parameter), e.empirical, e.bound + 3.0 * e.std_error, e.holds())
}

fn se_basis(n: usize, l: f64) -> Result<MercerBasis> {
    let g = Arc::new(Grid::uniform(Aabb::unit(1), n)?);
    build_mercer(&CovKernelSpec::squared_exponential(l)?, &g, DEFAULT_RANK_CUTOFF)
}

/// Kernel `δ(x − y)/w(x)`: every weighted-orthonormal direction has variance 1.
fn white_basis(grid: &Arc<Grid>) -> Result<MercerBasis> {
    let n = grid.len();
    let t = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / grid.weights()[i] } else { 0.0 });
    build_mercer(&CovKernelSpec::tabulated(t)?, grid, DEFAULT_RANK_CUTOFF)
}

fn geometric_operator(n: usize, seed: u64) -> Result<HsOperator> {
    let g = Arc::new(Grid::uniform(Aabb::unit(1), n)?);
    let s: Vec<f64> = (1..=n).map(|j| 2f64.powi(-(j as i32))).collect();
    synthetic_operator(&g, &g, &s, seed)
}

/// Run one suite (or all of them). `trials` replaces each check's default count.
pub fn run_suite(suite: Suite, trials: Option<usize>, seed: u64) -> Result<Vec<BoundRow>> {
    let all = [
        Suite::Deterministic,
        Suite::Pinv,
        Suite::Tail,
        Suite::Chernoff,
        Suite::Expectation,
        Suite::Gamma,
        Suite::Energy,
        Suite::Monotone,
    ];
    let picked: Vec<Suite> = if suite == Suite::All { all.to_vec() } else { vec![suite] };
    let mut rows = Vec::new();
    for (i, s) in picked.into_iter().enumerate() {
        let sd = derive_seed(seed, i as u64);
        match s {
            Suite::Deterministic => deterministic(&mut rows, trials.unwrap_or(1000), sd)?,
            Suite::Pinv => pinv(&mut rows, trials.unwrap_or(10_000), sd)?,
            Suite::Tail => tail(&mut rows, trials.unwrap_or(10_000), sd)?,
            Suite::Chernoff => chernoff(&mut rows, trials.unwrap_or(10_000), sd)?,
            Suite::Expectation => expectation(&mut rows, trials.unwrap_or(500), sd)?,
            Suite::Gamma => gamma(&mut rows, trials.unwrap_or(50), sd)?,
            Suite::Energy => energy(&mut rows, trials.unwrap_or(5000), sd)?,
            Suite::Monotone => monotone(&mut rows, trials.unwrap_or(500), sd)?,
            Suite::All => unreachable!(),
        }
    }
    Ok(rows)
}

fn deterministic(rows: &mut Vec<BoundRow>, draws: usize, seed: u64) -> Result<()> {
    let r = deterministic_bound_suite(draws, seed)?;
    rows.push(BoundRow::new(
        "deterministic_holds",
        format!("draws={draws}"),
        r.holds as f64,
        draws as f64,
        r.holds == draws,
    ));
    rows.push(BoundRow::new(
        "deterministic_worst_slack",
        format!("draws={draws}"),
        r.worst_relative_slack,
        -1e-8,
        r.worst_relative_slack >= -1e-8,
    ));
    Ok(())
}

fn pinv(rows: &mut Vec<BoundRow>, trials: usize, seed: u64) -> Result<()> {
    let cases: [(DMatrix<f64>, usize, usize); 2] = [
        (DMatrix::identity(5, 5), 5, 10),
        (DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.25])), 2, 8),
    ];
    for (i, (c, k, l)) in cases.iter().enumerate() {
        let st = pinv_norm_statistics(c, *k, *l, trials, derive_seed(seed, i as u64))?;
        let rel = (st.mean_sq_pinv_norm / st.expected_mean - 1.0).abs();
        rows.push(BoundRow::new(
            "pinv_mean_relative_deviation",
            format!("k={k};l={l};trC_inv={};trials={trials}", fmt(c.clone().try_inverse().map(|m| m.trace()).unwrap_or(f64::NAN))),
            rel,
            0.05,
            rel <= 0.05,
        ));
    }
    Ok(())
}

fn tail(rows: &mut Vec<BoundRow>, trials: usize, seed: u64) -> Result<()> {
    for (i, (k, l)) in [(4usize, 10usize), (8, 16)].into_iter().enumerate() {
        let st = pinv_norm_statistics(&DMatrix::identity(k, k), k, l, trials, derive_seed(seed, i as u64))?;
        for e in st.exceedance.iter().filter(|e| e.parameter > 1.0) {
            rows.push(exceedance_row("pinv_tail_exceedance", &format!("k={k};l={l};trials={trials}"), e));
        }
    }
    Ok(())
}

fn chernoff(rows: &mut Vec<BoundRow>, trials: usize, seed: u64) -> Result<()> {
    let basis = se_basis(64, 0.2)?;
    let l = 8;
    let st = omega2_tail_check(&basis, l, trials, seed)?;
    let params = format!("kernel=se:0.2;nodes=64;l={l};trials={trials}");
    for e in &st.exceedance {
        rows.push(exceedance_row("omega_hs_exceedance", &params, e));
    }
    let rel = (st.mean_hs_sq / st.expected_mean - 1.0).abs();
    rows.push(BoundRow::new("omega_hs_mean_relative_deviation", params, rel, 0.05, rel <= 0.05));
    Ok(())
}

fn expectation(rows: &mut Vec<BoundRow>, seeds: usize, seed: u64) -> Result<()> {
    let f = geometric_operator(30, seed)?;
    let basis = white_basis(f.col_grid())?;
    let (k, p) = (8, 4);
    let r = expectation_check(&f, &basis, k, p, seeds, derive_seed(seed, 1))?;
    rows.push(BoundRow::new(
        "expectation_mean_error",
        format!("sigma_j=2^-j;n=30;k={k};p={p};seeds={seeds};gamma_k={}", fmt(r.gamma_k)),
        r.mean_error,
        r.bound,
        r.holds(),
    ));
    Ok(())
}

fn gamma(rows: &mut Vec<BoundRow>, rotations: usize, seed: u64) -> Result<()> {
    let b = se_basis(64, 0.2)?;
    let lead = |k: usize| Quasimatrix::new(Arc::clone(b.grid()), b.eigenfunctions().columns(0, k).into_owned());

    let k = 4;
    let q = covariance_capture(&b, &lead(k)?)?;
    let want = 1.0 / gamma_lower_sum(&b, k);
    let rel = (q.gamma_k - want).abs() / want;
    rows.push(BoundRow::new("gamma_diagonal_case", format!("k={k}"), rel, 1e-10, rel <= 1e-10));

    let g = Arc::new(Grid::uniform(Aabb::unit(1), 16)?);
    let wb = white_basis(&g)?;
    let v = Quasimatrix::new(Arc::clone(&g), wb.eigenfunctions().columns(0, 5).into_owned())?;
    let dev = (covariance_capture(&wb, &v)?.gamma_k - 1.0).abs();
    rows.push(BoundRow::new("gamma_equal_eigenvalues", "k=5".into(), dev, 1e-10, dev <= 1e-10));

    let m = 3;
    let span = lead(k + m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (gamma_lower_sum(&b, k), gamma_upper_sum(&b, k, m));
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = f64::NEG_INFINITY;
    for _ in 0..rotations {
        let rot = QR::new(DMatrix::from_fn(k + m, k + m, |_, _| StandardNormal.sample(&mut rng))).q();
        let v = span.mul_matrix(&rot.columns(0, k).into_owned());
        let inv = 1.0 / covariance_capture(&b, &v)?.gamma_k;
        worst_lo = worst_lo.min(inv);
        worst_hi = worst_hi.max(inv);
    }
    let params = format!("k={k};m={m};rotations={rotations}");
    rows.push(BoundRow::new("gamma_inverse_lower_sum", params.clone(), worst_lo, lo, worst_lo >= lo * (1.0 - 1e-10)));
    rows.push(BoundRow::new("gamma_inverse_upper_sum", params, worst_hi, hi, worst_hi <= hi * (1.0 + 1e-10)));
    Ok(())
}

fn energy(rows: &mut Vec<BoundRow>, trials: usize, seed: u64) -> Result<()> {
    let n = 16;
    let g = Arc::new(Grid::uniform(Aabb::unit(1), n)?);
    let s: Vec<f64> = (0..n).map(|j| 0.7f64.powi(j as i32)).collect();
    let f = synthetic_operator(&g, &g, &s, seed)?;
    let basis = build_mercer(&CovKernelSpec::squared_exponential(0.2)?, &g, DEFAULT_RANK_CUTOFF)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let t = DMatrix::from_fn(6, 3, |_, _| StandardNormal.sample(&mut rng));
    let k = 3;
    let r = sigma2_omega2_energy_check(&f, &basis, &t, k, trials, derive_seed(seed, 2))?;
    rows.push(BoundRow::new(
        "sigma2_omega2_energy",
        format!("n={n};k={k};T=6x3;trials={trials}"),
        r.empirical_mean,
        r.bound + 3.0 * r.std_error,
        r.holds(),
    ));
    Ok(())
}

fn monotone(rows: &mut Vec<BoundRow>, seeds: usize, seed: u64) -> Result<()> {
    let f = geometric_operator(30, seed)?;
    let basis = se_basis(30, 0.1)?;
    let k = 4;
    let mut stats = Vec::new();
    for p in [2usize, 4, 8] {
        let errs: Vec<f64> = (0..seeds)
            .map(|i| {
                randomized_range_with_reference(&f, &f, &basis, k, p, derive_seed(seed, (p * seeds + i) as u64))
                    .map(|r| r.achieved_error.unwrap_or(f64::NAN))
            })
            .collect::<Result<_>>()?;
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        stats.push((p, mean, (var / n).sqrt()));
    }
    for w in stats.windows(2) {
        let ((p0, m0, s0), (p1, m1, s1)) = (w[0], w[1]);
        let slack = 3.0 * (s0 * s0 + s1 * s1).sqrt();
        rows.push(BoundRow::new(
            "range_error_monotone_in_p",
            format!("k={k};p={p0}->{p1};seeds={seeds}"),
            m1,
            m0 + slack,
            m1 <= m0 + slack,
        ));
    }
    Ok(())
}
