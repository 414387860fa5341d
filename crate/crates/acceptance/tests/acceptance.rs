//! Acceptance criteria. Prints one line per criterion (or sub-criterion) and exits
//! non-zero if any of them fails. Tolerances are fixed below.

use std::sync::Arc;
use std::time::Instant;

use greenlearn::gp::{build_mercer, Aabb, CovKernelSpec, Grid, MercerBasis, Quasimatrix, DEFAULT_RANK_CUTOFF};
use greenlearn::hsops::{weighted_svd, HsOperator};
use greenlearn::oracle::{assemble, dense_green, CoefficientField, DenseGreen, EllipticOracle};
use greenlearn::partition::{admissible_count_closed_form, build_partition, build_partition_on, DEFAULT_RHO};
use greenlearn::reconstruct::{global_error, learn_block, learn_green, LearnOptions};
use greenlearn::rsvd::{
    covariance_capture, deterministic_bound_suite, expectation_check, gamma_lower_sum, gamma_upper_sum,
    omega2_tail_check, pinv_norm_statistics, synthetic_operator,
};
use nalgebra::{DMatrix, QR};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SLACK_1: f64 = -1e-8;
const PINV_REL_2: f64 = 0.05;
const GAMMA_TOL_6: f64 = 1e-10;
const DECAY_1D_8: f64 = 1e-6;
const DECAY_2D_8: f64 = 1e-4;
const MASS_RATIO_9: f64 = 1.5;
const ERR_1D_10: f64 = 5e-2;
const SEEDS_OK_10: usize = 18;
const ERR_3D_10: f64 = 2e-1;
const BLOCK_TOL_11: f64 = 1e-8;

struct Ledger {
    failed: usize,
    total: usize,
}

impl Ledger {
    fn line(&mut self, id: &str, name: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failed += 1;
        }
        println!("criterion {id:<4} {:<4} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn grid(dim: usize, n: usize) -> Arc<Grid> {
    Arc::new(Grid::uniform(Aabb::unit(dim), n).unwrap())
}

fn se(l: f64) -> CovKernelSpec {
    CovKernelSpec::squared_exponential(l).unwrap()
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn leading(b: &MercerBasis, k: usize) -> Quasimatrix {
    Quasimatrix::new(Arc::clone(b.grid()), b.eigenfunctions().columns(0, k).into_owned()).unwrap()
}

fn c1(l: &mut Ledger) {
    let t = Instant::now();
    let r = deterministic_bound_suite(1000, 1).unwrap();
    let dt = secs(t);
    l.line(
        "1",
        "deterministic bound",
        r.holds == 1000 && r.worst_relative_slack >= SLACK_1 && dt < 30.0,
        format!("{}/1000 draws hold, worst relative slack {:.3e}, {dt:.2} s", r.holds, r.worst_relative_slack),
    );
}

fn c2(l: &mut Ledger) {
    let t = Instant::now();
    let s = pinv_norm_statistics(&DMatrix::identity(5, 5), 5, 10, 10_000, 2).unwrap();
    let dt = secs(t);
    let rel = (s.mean_sq_pinv_norm / 1.25 - 1.0).abs();
    l.line(
        "2",
        "pseudo-inverse mean",
        rel <= PINV_REL_2 && dt < 10.0,
        format!("mean {:.5} vs 1.25 (rel {rel:.3e}), {dt:.2} s", s.mean_sq_pinv_norm),
    );
}

fn c3(l: &mut Ledger) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (k, ell)) in [(4, 10), (8, 16)].into_iter().enumerate() {
        let s = pinv_norm_statistics(&DMatrix::identity(k, k), k, ell, 10_000, 30 + i as u64).unwrap();
        for e in s.exceedance.iter().filter(|e| e.parameter > 1.0) {
            ok &= e.holds();
            parts.push(format!("({k},{ell}) t={}: {:.2e}<={:.2e}", e.parameter, e.empirical, e.bound + 3.0 * e.std_error));
        }
    }
    l.line("3", "pseudo-inverse tail", ok, parts.join("; "));
}

fn c4(l: &mut Ledger) {
    let g = grid(1, 64);
    let b = build_mercer(&se(0.2), &g, DEFAULT_RANK_CUTOFF).unwrap();
    let s = omega2_tail_check(&b, 8, 10_000, 4).unwrap();
    let ok = s.exceedance.iter().all(|e| e.holds());
    let parts: Vec<String> = s
        .exceedance
        .iter()
        .map(|e| format!("s={}: {:.2e}<={:.2e}", e.parameter, e.empirical, e.bound + 3.0 * e.std_error))
        .collect();
    l.line("4", "Chernoff bound on the test matrix", ok, parts.join("; "));
}

fn c5(l: &mut Ledger) {
    let g = grid(1, 30);
    let s: Vec<f64> = (1..=30).map(|j| 2f64.powi(-j)).collect();
    let f = synthetic_operator(&g, &g, &s, 5).unwrap();
    let n = g.len();
    let white = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / g.weights()[i] } else { 0.0 });
    let basis = build_mercer(&CovKernelSpec::tabulated(white).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
    let r = expectation_check(&f, &basis, 8, 4, 500, 6).unwrap();
    let se_basis = build_mercer(&se(0.1), &g, DEFAULT_RANK_CUTOFF).unwrap();
    let r2 = expectation_check(&f, &se_basis, 8, 4, 500, 7).unwrap();
    l.line(
        "5",
        "expectation bound",
        r.holds() && r2.holds(),
        format!(
            "white kernel: mean {:.3e} <= {:.3e} (gamma {:.3}); se:0.1 kernel: mean {:.3e} <= {:.3e} (gamma {:.3e})",
            r.mean_error, r.bound, r.gamma_k, r2.mean_error, r2.bound, r2.gamma_k
        ),
    );
}

fn c6(l: &mut Ledger) {
    let b = build_mercer(&se(0.2), &grid(1, 64), DEFAULT_RANK_CUTOFF).unwrap();
    let q = covariance_capture(&b, &leading(&b, 4)).unwrap();
    let want = 1.0 / gamma_lower_sum(&b, 4);
    let d1 = (q.gamma_k - want).abs() / want;

    let g = grid(1, 16);
    let white = DMatrix::from_fn(16, 16, |i, j| if i == j { 1.0 / g.weights()[i] } else { 0.0 });
    let wb = build_mercer(&CovKernelSpec::tabulated(white).unwrap(), &g, DEFAULT_RANK_CUTOFF).unwrap();
    let d2 = (covariance_capture(&wb, &leading(&wb, 5)).unwrap().gamma_k - 1.0).abs();

    let (k, m) = (4, 3);
    let span = leading(&b, k + m);
    let (lo, hi) = (gamma_lower_sum(&b, k), gamma_upper_sum(&b, k, m));
    let mut inside = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let z = DMatrix::from_fn(k + m, k + m, |_, _| StandardNormal.sample(&mut rng));
        let rot = QR::new(z).q().columns(0, k).into_owned();
        let inv = 1.0 / covariance_capture(&b, &span.mul_matrix(&rot)).unwrap().gamma_k;
        if inv >= lo * (1.0 - GAMMA_TOL_6) && inv <= hi * (1.0 + GAMMA_TOL_6) {
            inside += 1;
        }
    }
    l.line(
        "6",
        "gamma identities",
        d1 <= GAMMA_TOL_6 && d2 <= GAMMA_TOL_6 && inside == 50,
        format!("diagonal rel dev {d1:.2e}, equal-eigenvalue dev {d2:.2e}, sandwich {inside}/50"),
    );
}

fn c7(l: &mut Ledger) {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, na, adm) in [(1u32, 64usize, 0usize), (2, 1000, 3096), (3, 10648, 56448)] {
        let c = build_partition(3, n, DEFAULT_RHO).unwrap().counts();
        ok &= c.non_admissible == na && c.admissible == adm && admissible_count_closed_form(3, n) == adm;
        parts.push(format!("n={n}: {}/{}", c.non_admissible, c.admissible));
    }
    let dt = secs(t);
    l.line("7", "partition counts", ok && dt < 5.0, format!("{}, {dt:.2} s", parts.join(", ")));
}

fn reference(dim: usize, n: usize) -> (EllipticOracle, DenseGreen) {
    let o = assemble(&CoefficientField::Identity, &grid(dim, n)).unwrap();
    let d = dense_green(&o).unwrap();
    (o, d)
}

fn c8(l: &mut Ledger, r1: &DenseGreen) {
    let b = r1.block(&Aabb::new(&[0.0], &[0.25]).unwrap(), &Aabb::new(&[0.75], &[1.0]).unwrap()).unwrap();
    let s = weighted_svd(&b).unwrap().singular_values;
    let q1 = s[5] / s[0];
    l.line("8a", "1D admissible-block decay", q1 <= DECAY_1D_8, format!("sigma_6/sigma_1 = {q1:.3e}"));

    let (_, r2) = reference(2, 34);
    let x = Aabb::new(&[0.0, 0.0], &[0.25, 0.25]).unwrap();
    let y = Aabb::new(&[0.5, 0.0], &[0.75, 0.25]).unwrap();
    let s = weighted_svd(&r2.block(&x, &y).unwrap()).unwrap().singular_values;
    let q2 = s[11] / s[0];
    l.line("8b", "2D admissible-block decay", q2 <= DECAY_2D_8, format!("sigma_12/sigma_1 = {q2:.3e}"));
}

fn c9(l: &mut Ledger, r1: &DenseGreen, r3: &DenseGreen) {
    for (id, name, r) in [("9a", "1D", r1), ("9b", "3D 17^3", r3)] {
        let mass = |n: u32| {
            let p = build_partition_on(r.grid().bbox(), n, DEFAULT_RHO).unwrap();
            r.non_admissible_mass_sq(&p) / r.norm_sq()
        };
        let (m2, m3) = (mass(2), mass(3));
        l.line(
            id,
            &format!("{name} non-admissible mass decay"),
            m3 < m2 && m3 <= m2 / MASS_RATIO_9,
            format!("mass(2) = {m2:.4}, mass(3) = {m3:.4}, ratio {:.3} (need >= {MASS_RATIO_9})", m2 / m3),
        );
    }
}

fn opts(k: usize, p: usize, levels: u32, seed: u64) -> LearnOptions {
    LearnOptions { k: Some(k), p: Some(p), levels: Some(levels), seed, ..LearnOptions::default() }
}

fn c10(l: &mut Ledger, o1: &EllipticOracle, r1: &DenseGreen, o3: &EllipticOracle, r3: &DenseGreen) {
    let t = Instant::now();
    let mut ok = 0;
    let mut exact = true;
    let mut errs = Vec::new();
    let mut worst_run: f64 = 0.0;
    for seed in 0..20 {
        let tr = Instant::now();
        o1.reset_query_count();
        let g = learn_green(o1, &se(0.05), &opts(8, 8, 4, seed)).unwrap();
        worst_run = worst_run.max(secs(tr));
        exact &= o1.query_count() == 2 * 16 * g.learned_pairs()
            && g.total_queries() == o1.query_count()
            && g.learned_pairs() == g.partition().unordered_admissible().len();
        let e = global_error(&g, r1).unwrap().relative_l2_error;
        if e <= ERR_1D_10 {
            ok += 1;
        }
        errs.push(e);
    }
    let total = secs(t);
    let (lo, hi) = errs.iter().fold((f64::INFINITY, 0f64), |(a, b), &e| (a.min(e), b.max(e)));
    l.line(
        "10a",
        "1D end-to-end error",
        ok >= SEEDS_OK_10,
        format!("{ok}/20 seeds <= {ERR_1D_10}; errors in [{lo:.4}, {hi:.4}]"),
    );
    l.line("10b", "1D query count 2(k+p) per learned pair", exact, format!("{} queries per run", 32 * 33));
    l.line("10c", "1D runtime", worst_run < 60.0, format!("slowest run {worst_run:.2} s, 20 runs with reports {total:.2} s"));

    let t = Instant::now();
    o3.reset_query_count();
    let g = learn_green(o3, &se(0.05), &opts(6, 6, 2, 0)).unwrap();
    let n3 = o3.query_count();
    let rep = global_error(&g, r3).unwrap();
    let dt = secs(t);
    l.line(
        "10d",
        "3D end-to-end error",
        rep.relative_l2_error <= ERR_3D_10,
        format!(
            "relative error {:.4} (non-admissible share of |G|^2 {:.4}), {} queries for {} pairs",
            rep.relative_l2_error,
            rep.non_admissible_mass_sq / rep.reference_norm_sq,
            n3,
            g.learned_pairs()
        ),
    );
    let ge = rep.gamma_eps.unwrap_or(f64::NAN);
    l.line(
        "10e",
        "3D Gamma_eps in (0, 1]",
        ge > 0.0 && ge <= 1.0 && n3 == 24 * g.learned_pairs(),
        format!("Gamma_eps = {ge:.4e}, {} singular blocks", rep.singular_blocks),
    );
    l.line("10f", "3D runtime", dt < 600.0, format!("{dt:.1} s"));
}

fn relative_block_error(reference: &HsOperator, learned: DMatrix<f64>) -> f64 {
    let op = HsOperator::new(Arc::clone(reference.row_grid()), Arc::clone(reference.col_grid()), learned).unwrap();
    reference.sub(&op).unwrap().hs_norm() / reference.hs_norm()
}

fn c11(l: &mut Ledger, o1: &EllipticOracle, r1: &DenseGreen) {
    let x = Aabb::new(&[0.0], &[0.25]).unwrap();
    let y = Aabb::new(&[0.75], &[1.0]).unwrap();
    let (rxy, ryx) = (r1.block(&x, &y).unwrap(), r1.block(&y, &x).unwrap());
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (xy, yx) = learn_block(o1, &se(0.05), &x, &y, 8, 8, seed).unwrap();
        let shared = Arc::ptr_eq(&xy.left, &yx.right) && Arc::ptr_eq(&xy.right, &yx.left) && yx.kernel() == xy.kernel().transpose();
        let exy = relative_block_error(&rxy, xy.kernel());
        let eyx = relative_block_error(&ryx, yx.kernel());
        worst = worst.max(exy).max(eyx);
        if shared && exy <= BLOCK_TOL_11 && eyx <= BLOCK_TOL_11 {
            good += 1;
        }
    }
    l.line(
        "11",
        "self-adjoint block pair",
        good == 20,
        format!("{good}/20 seeds share factors with both orientations <= {BLOCK_TOL_11:e}; worst {worst:.2e}"),
    );
}

fn main() {
    let start = Instant::now();
    let mut l = Ledger { failed: 0, total: 0 };
    c1(&mut l);
    c2(&mut l);
    c3(&mut l);
    c4(&mut l);
    c5(&mut l);
    c6(&mut l);
    c7(&mut l);
    let (o1, r1) = reference(1, 258);
    let (o3, r3) = reference(3, 17);
    c8(&mut l, &r1);
    c9(&mut l, &r1, &r3);
    c10(&mut l, &o1, &r1, &o3, &r3);
    c11(&mut l, &o1, &r1);
    println!(
        "acceptance: {}/{} lines pass, {:.1} s",
        l.total - l.failed,
        l.total,
        start.elapsed().as_secs_f64()
    );
    if l.failed > 0 {
        std::process::exit(1);
    }
}
