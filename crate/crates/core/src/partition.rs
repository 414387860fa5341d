//! Hierarchical partition of `D × D` into admissible and non-admissible box pairs.
//!
//! Starting from the root pair `(D, D)`, every non-admissible pair is split into
//! its `2^d × 2^d` child pairs (each box halved along every axis). Children that
//! satisfy the admissibility rule are frozen at their level; the rest recurse.
//! Non-admissible pairs left at the last level are leaves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Aabb;

/// Default separation parameter.
pub const DEFAULT_RHO: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Relative slack for the `>=` in the admissibility test. Face-separated boxes in
/// 3D sit exactly on the boundary `dist = ρ·diam` when `ρ = 1/√3`.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// `dist(X, Y) >= ρ · max(diam X, diam Y)`.
pub fn admissibility(x: &Aabb, y: &Aabb, rho: f64) -> bool {
    let d = x.dist(y);
    let m = x.diam().max(y.diam());
    d >= rho * m * (1.0 - ADMISSIBILITY_SLACK)
}

/// Dyadic box of the hierarchy: `level` and per-axis interval index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoxIndex {
    pub level: u32,
    pub idx: [u32; 3],
}

impl BoxIndex {
    pub fn root() -> Self {
        BoxIndex { level: 0, idx: [0; 3] }
    }

    pub fn geometry(&self, domain: &Aabb) -> Aabb {
        let mut b = *domain;
        let cells = (1u64 << self.level) as f64;
        for a in 0..domain.dim {
            let w = domain.width(a) / cells;
            b.lo[a] = domain.lo[a] + self.idx[a] as f64 * w;
            b.hi[a] = if self.idx[a] as u64 + 1 == 1u64 << self.level {
                domain.hi[a]
            } else {
                domain.lo[a] + (self.idx[a] + 1) as f64 * w
            };
        }
        b
    }

    pub fn children(&self, dim: usize) -> Vec<BoxIndex> {
        (0..1u32 << dim)
            .map(|bits| {
                let mut idx = [0u32; 3];
                for a in 0..dim {
                    idx[a] = 2 * self.idx[a] + ((bits >> a) & 1);
                }
                BoxIndex { level: self.level + 1, idx }
            })
            .collect()
    }

    /// Ancestor at a coarser level.
    pub fn ancestor(&self, level: u32) -> BoxIndex {
        let shift = self.level - level;
        BoxIndex { level, idx: [self.idx[0] >> shift, self.idx[1] >> shift, self.idx[2] >> shift] }
    }
}

/// A block `X × Y` of the partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPair {
    pub x: Aabb,
    pub y: Aabb,
    pub level: u32,
    pub x_index: BoxIndex,
    pub y_index: BoxIndex,
}

impl BoxPair {
    fn new(domain: &Aabb, xi: BoxIndex, yi: BoxIndex) -> Self {
        BoxPair { x: xi.geometry(domain), y: yi.geometry(domain), level: xi.level, x_index: xi, y_index: yi }
    }

    pub fn transposed(&self) -> BoxPair {
        BoxPair { x: self.y, y: self.x, level: self.level, x_index: self.y_index, y_index: self.x_index }
    }

    pub fn key(&self) -> (BoxIndex, BoxIndex) {
        (self.x_index, self.y_index)
    }
}

/// The block-cluster partition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissiblePartition {
    pub domain: Aabb,
    pub rho: f64,
    pub levels: u32,
    pub admissible: Vec<BoxPair>,
    pub non_admissible: Vec<BoxPair>,
}

/// Partition of `[0, 1]^dim`.
pub fn build_partition(dim: usize, n_levels: u32, rho: f64) -> Result<AdmissiblePartition> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dim must be 1, 2 or 3, got {dim}")));
    }
    build_partition_on(&Aabb::unit(dim), n_levels, rho)
}

/// Partition of an arbitrary box domain.
pub fn build_partition_on(domain: &Aabb, n_levels: u32, rho: f64) -> Result<AdmissiblePartition> {
    if n_levels < 1 {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let dim = domain.dim;
    let splits = n_levels as usize * dim;
    if splits > 24 {
        return Err(Error::PartitionTooLarge { splits });
    }

    let mut admissible = Vec::new();
    let mut open = vec![(BoxIndex::root(), BoxIndex::root())];
    for _level in 1..=n_levels {
        let mut next = Vec::with_capacity(open.len() * (1 << (2 * dim)));
        for (xi, yi) in &open {
            let ych = yi.children(dim);
            for cx in xi.children(dim) {
                for cy in &ych {
                    let pair = BoxPair::new(domain, cx, *cy);
                    if admissibility(&pair.x, &pair.y, rho) {
                        admissible.push(pair);
                    } else {
                        next.push((cx, *cy));
                    }
                }
            }
        }
        open = next;
    }
    let mut non_admissible: Vec<BoxPair> = open.into_iter().map(|(x, y)| BoxPair::new(domain, x, y)).collect();
    admissible.sort_by_key(|p| p.key());
    non_admissible.sort_by_key(|p| p.key());
    Ok(AdmissiblePartition { domain: *domain, rho, levels: n_levels, admissible, non_admissible })
}

impl AdmissiblePartition {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// `Σ vol(X) vol(Y)` over all blocks; equals `vol(D)^2` for a tiling.
    pub fn covered_volume(&self) -> f64 {
        self.admissible
            .iter()
            .chain(&self.non_admissible)
            .map(|p| p.x.volume() * p.y.volume())
            .sum()
    }

    /// Admissible pairs with `X` ordered before `Y`; together with their
    /// transposes they are all admissible pairs.
    pub fn unordered_admissible(&self) -> Vec<BoxPair> {
        self.admissible.iter().filter(|p| p.x_index < p.y_index).copied().collect()
    }

    pub fn counts(&self) -> PartitionCounts {
        PartitionCounts {
            admissible: self.admissible.len(),
            non_admissible: self.non_admissible.len(),
            closed_form_admissible: admissible_count_closed_form(self.dim(), self.levels),
            closed_form_non_admissible: non_admissible_count_closed_form(self.dim(), self.levels),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub admissible: usize,
    pub non_admissible: usize,
    pub closed_form_admissible: usize,
    pub closed_form_non_admissible: usize,
}

/// `(3 · 2^n − 2)^d`, the number of leaf pairs whose boxes are neighbours
/// (index offsets at most one on every axis).
pub fn non_admissible_count_closed_form(dim: usize, n: u32) -> usize {
    (3 * (1usize << n) - 2).pow(dim as u32)
}

/// `Σ_{L=1}^{n} 2^{2d} (3 · 2^{L−1} − 2)^d − (3 · 2^L − 2)^d`.
pub fn admissible_count_closed_form(dim: usize, n: u32) -> usize {
    (1..=n)
        .map(|l| (1usize << (2 * dim)) * non_admissible_count_closed_form(dim, l - 1) - non_admissible_count_closed_form(dim, l))
        .sum()
}

fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 {
        r
    } else {
        x.ceil()
    }
}

/// Hierarchy depth `⌈log2(54 π² (6 + √3) c²) + 2 log2(1/ε)⌉` that pushes the
/// non-admissible mass below `ε ||G||`.
pub fn choose_levels(epsilon: f64, c_kappa: f64) -> Result<u32> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(c_kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("c_kappa must be positive, got {c_kappa}")));
    }
    let v = (54.0 * PI * PI * (6.0 + 3f64.sqrt()) * c_kappa * c_kappa).log2() + 2.0 * (1.0 / epsilon).log2();
    Ok(ceil_snapped(v).max(1.0) as u32)
}

/// The level that [`choose_levels`] would need to reach `n` exactly; inverse use
/// for reporting an effective ε after clamping.
pub fn effective_epsilon(levels: u32, c_kappa: f64) -> f64 {
    let c = 54.0 * PI * PI * (6.0 + 3f64.sqrt()) * c_kappa * c_kappa;
    (c / 2f64.powi(levels as i32)).sqrt()
}

/// Block rank `⌈c⌉ ⌈ln(1/ε)⌉^4 + ⌈ln(1/ε)⌉`.
pub fn target_rank(epsilon: f64, c_sep: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(c_sep > 0.0) {
        return Err(Error::InvalidParameter(format!("c_sep must be positive, got {c_sep}")));
    }
    let l = ceil_snapped(-epsilon.ln()) as usize;
    Ok(ceil_snapped(c_sep) as usize * l.pow(4) + l)
}
