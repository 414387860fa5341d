use std::f64::consts::E;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::block::block_basis;
use super::hier::HierGreen;
use crate::error::{Error, Result};
use crate::gp::quasimatrix::same_grid;
use crate::gp::{Aabb, Quasimatrix};
use crate::hsops::{weighted_svd, HsOperator};
use crate::oracle::DenseGreen;
use crate::partition::BoxIndex;
use crate::rsvd::{covariance_capture, evaluate_probability_bound, gamma_lower_sum};

/// Error diagnostics of one admissible block.
#[derive(Clone, Debug, Serialize)]
pub struct BlockError {
    pub x_index: BoxIndex,
    pub y_index: BoxIndex,
    /// `||G − G̃||_{L²(X × Y)}`.
    pub error: f64,
    pub reference_norm: f64,
    /// `(Σ_{j>k} σ_j²)^{1/2}` of the reference block.
    pub sv_tail: f64,
    /// Quality of the sampling kernel on `Y` for the top `k` right singular
    /// functions; `None` when `C` is numerically singular.
    pub gamma_k: Option<f64>,
    /// `(1/k) Σ_{j≤k} λ_1/λ_j` of the kernel restricted to `Y`.
    pub gamma_lower_sum: f64,
    pub trace_ratio: f64,
    /// Per-block tail bound at `(s, t)`, when `γ_k` is available and `p ≥ 4`.
    pub tail_bound: Option<f64>,
    pub tail_event_holds: Option<bool>,
}

/// Accuracy of a learned approximant against a dense reference.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    /// `sqrt((Σ block errors² + non-admissible mass) / ||G||²)`.
    pub relative_l2_error: f64,
    /// `||G − G̃|| / ||G||` from dense subtraction.
    pub direct_relative_error: f64,
    pub admissible_error_sq: f64,
    pub non_admissible_mass_sq: f64,
    pub reference_norm_sq: f64,
    pub per_block: Vec<BlockError>,
    /// Minimum `γ_k` over blocks where it is computable.
    pub gamma_eps: Option<f64>,
    pub singular_blocks: usize,
    /// `1/γ_k ≥ (1/k) Σ λ_1/λ_j` on every computable block.
    pub gamma_lower_bound_holds: bool,
    pub n_queries: usize,
    pub learned_pairs: usize,
    pub epsilon_target: f64,
    pub effective_epsilon: f64,
    pub k: usize,
    pub p: usize,
    pub levels: u32,
    pub s: f64,
    pub t: f64,
    /// Every per-block tail event was evaluated and holds.
    pub all_events_hold: Option<bool>,
    /// Relative aggregate bound from the per-block bounds with `γ` replaced by `Γ_ε`.
    pub aggregate_bound: Option<f64>,
    pub aggregate_holds: Option<bool>,
    /// `Σ_adm ||G||²_{L²(X × Ŷ)} / ||G||²`, `Ŷ` the `ρ/2 · diam Y` dilation of `Y`.
    pub yhat_overlap: f64,
    /// `5^d`.
    pub neighbour_overcount: usize,
}

fn dilated_mass(reference: &DenseGreen, x: &Aabb, y: &Aabb, rho: f64) -> f64 {
    let grid = reference.grid();
    let xs = grid.owned_nodes(x);
    let r = 0.5 * rho * y.diam();
    let ys: Vec<usize> = (0..grid.len()).filter(|&j| y.dist_to_point(&grid.nodes()[j]) <= r).collect();
    let w = grid.weights();
    let g = reference.values();
    let mut s = 0.0;
    for &j in &ys {
        for &i in &xs {
            s += w[i] * w[j] * g[(i, j)] * g[(i, j)];
        }
    }
    s
}

/// Per-block and global errors with `s = k^{1/4}` and `t = e`.
pub fn global_error(g: &HierGreen, reference: &DenseGreen) -> Result<ErrorReport> {
    let k = g.settings().k;
    global_error_with(g, reference, (k as f64).powf(0.25).max(1.0), E)
}

pub fn global_error_with(g: &HierGreen, reference: &DenseGreen, s: f64, t: f64) -> Result<ErrorReport> {
    same_grid(g.grid(), reference.grid())?;
    let settings = g.settings().clone();
    let (k, p) = (settings.k, settings.p);
    let grid = Arc::clone(g.grid());
    let part = g.partition();

    let per_block: Vec<BlockError> = part
        .admissible
        .par_iter()
        .zip(g.blocks())
        .map(|(pair, block)| {
            let refb = reference.block(&pair.x, &pair.y)?;
            let learned = HsOperator::new(Arc::clone(refb.row_grid()), Arc::clone(refb.col_grid()), block.kernel())?;
            let error = refb.sub(&learned)?.hs_norm();
            let svd = weighted_svd(&refb)?;
            let basis = block_basis(g.kernel(), &grid, &pair.y)?;
            let kk = k.min(svd.singular_values.len());
            let v = Quasimatrix::new(Arc::clone(refb.col_grid()), svd.right.values().columns(0, kk).into_owned())?;
            let gamma_k = match covariance_capture(&basis, &v) {
                Ok(q) => Some(q.gamma_k),
                Err(Error::SingularCovariance { .. }) => None,
                Err(e) => return Err(e),
            };
            let sv_tail = svd.tail(k);
            let tail_bound = match gamma_k {
                Some(gm) if p >= 4 => {
                    Some(evaluate_probability_bound(sv_tail, gm.min(1.0), k, p, s, t, basis.trace_ratio())?.0)
                }
                _ => None,
            };
            Ok(BlockError {
                x_index: pair.x_index,
                y_index: pair.y_index,
                error,
                reference_norm: refb.hs_norm(),
                sv_tail,
                gamma_k,
                gamma_lower_sum: gamma_lower_sum(&basis, k),
                trace_ratio: basis.trace_ratio(),
                tail_bound,
                tail_event_holds: tail_bound.map(|b| error <= b),
            })
        })
        .collect::<Result<_>>()?;

    let norm_sq = reference.norm_sq();
    let adm: f64 = per_block.iter().map(|b| b.error * b.error).sum();
    let na = reference.non_admissible_mass_sq(part);
    let diff = reference.values() - g.to_dense();
    let w = grid.weights();
    let mut direct = 0.0;
    for j in 0..w.len() {
        for i in 0..w.len() {
            direct += w[i] * w[j] * diff[(i, j)] * diff[(i, j)];
        }
    }

    let gammas: Vec<f64> = per_block.iter().filter_map(|b| b.gamma_k).collect();
    let gamma_eps = gammas.iter().copied().reduce(f64::min);
    let singular_blocks = per_block.iter().filter(|b| b.gamma_k.is_none()).count();
    let gamma_lower_bound_holds = per_block
        .iter()
        .all(|b| b.gamma_k.is_none_or(|gm| 1.0 / gm >= b.gamma_lower_sum * (1.0 - 1e-8) - 1e-8));
    let all_events_hold = if per_block.iter().all(|b| b.tail_event_holds.is_some()) {
        Some(per_block.iter().all(|b| b.tail_event_holds == Some(true)))
    } else {
        None
    };
    let aggregate_bound = match (gamma_eps, all_events_hold.is_some()) {
        (Some(ge), true) => {
            let mut sum = na;
            for b in &per_block {
                sum += evaluate_probability_bound(b.sv_tail, ge.min(1.0), k, p, s, t, b.trace_ratio)?.0.powi(2);
            }
            Some((sum / norm_sq).sqrt())
        }
        _ => None,
    };
    let relative = ((adm + na) / norm_sq).sqrt();
    let aggregate_holds = aggregate_bound.map(|b| relative <= b);
    let yhat: f64 = part.admissible.par_iter().map(|pr| dilated_mass(reference, &pr.x, &pr.y, part.rho)).sum();

    Ok(ErrorReport {
        relative_l2_error: relative,
        direct_relative_error: (direct / norm_sq).sqrt(),
        admissible_error_sq: adm,
        non_admissible_mass_sq: na,
        reference_norm_sq: norm_sq,
        per_block,
        gamma_eps,
        singular_blocks,
        gamma_lower_bound_holds,
        n_queries: g.total_queries(),
        learned_pairs: g.learned_pairs(),
        epsilon_target: settings.epsilon,
        effective_epsilon: settings.effective_epsilon,
        k,
        p,
        levels: settings.levels,
        s,
        t,
        all_events_hold,
        aggregate_bound,
        aggregate_holds,
        yhat_overlap: yhat / norm_sq,
        neighbour_overcount: 5usize.pow(grid.dim() as u32),
    })
}
