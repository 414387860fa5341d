use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::block::{block_basis, learn_block_with_basis, LowRankBlock};
use crate::error::{Error, Result};
use crate::gp::{Aabb, CovKernelSpec, Grid, GridDocument, MercerBasis, Quasimatrix};
use crate::hsops::{weighted_svd, BlackBox};
use crate::oracle::DenseGreen;
use crate::partition::{
    build_partition_on, choose_levels, effective_epsilon, target_rank, AdmissiblePartition, BoxIndex, BoxPair,
    DEFAULT_RHO,
};
use crate::rng::derive_seed;

/// Inputs of [`learn_green`]. `None` fields fall back to the formulas.
#[derive(Clone, Debug)]
pub struct LearnOptions {
    pub epsilon: f64,
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub levels: Option<u32>,
    pub c_kappa: f64,
    pub c_sep: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions { epsilon: 0.1, k: None, p: None, levels: None, c_kappa: 1.0, c_sep: 1.0, rho: DEFAULT_RHO, seed: 0 }
    }
}

/// Parameters actually used for a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnSettings {
    pub epsilon: f64,
    /// ε implied by the level count after clamping.
    pub effective_epsilon: f64,
    pub k: usize,
    pub p: usize,
    pub levels: u32,
    pub rho: f64,
    pub seed: u64,
}

/// Hierarchical approximant of a Green's function.
#[derive(Clone, Debug)]
pub struct HierGreen {
    grid: Arc<Grid>,
    partition: AdmissiblePartition,
    kernel: CovKernelSpec,
    settings: LearnSettings,
    /// Aligned with `partition.admissible`.
    blocks: Vec<LowRankBlock>,
    lookup: HashMap<(BoxIndex, BoxIndex), usize>,
    /// `axis_boxes[L - 1][a][i]`: interval at level `L` owning axis node `i`.
    axis_boxes: Vec<[Vec<u32>; 3]>,
    learned_pairs: usize,
}

fn axis_coordinates(grid: &Grid, axis: usize) -> Vec<f64> {
    (0..grid.shape()[axis])
        .map(|i| {
            let mut idx = [0usize; 3];
            idx[axis] = i;
            grid.nodes()[grid.flat_index(idx)][axis]
        })
        .collect()
}

/// Interval index at `level` of every node along every axis.
fn axis_box_maps(grid: &Grid, level: u32) -> [Vec<u32>; 3] {
    let domain = *grid.bbox();
    let mut out: [Vec<u32>; 3] = Default::default();
    for (a, slot) in out.iter_mut().enumerate().take(grid.dim()) {
        let coords = axis_coordinates(grid, a);
        let mut map = vec![u32::MAX; coords.len()];
        for j in 0..1u32 << level {
            let mut idx = [0u32; 3];
            idx[a] = j;
            let b = BoxIndex { level, idx }.geometry(&domain);
            for (i, &c) in coords.iter().enumerate() {
                if b.owns_coordinate(a, c, &domain) {
                    map[i] = j;
                }
            }
        }
        *slot = map;
    }
    out
}

/// Deepest level at which every interval of every axis owns at least two nodes.
pub fn max_levels_for_grid(grid: &Grid) -> u32 {
    let mut best = 0;
    for level in 1..=(24 / grid.dim() as u32) {
        let maps = axis_box_maps(grid, level);
        let ok = (0..grid.dim()).all(|a| {
            let mut counts = vec![0usize; 1 << level];
            for &j in &maps[a] {
                counts[j as usize] += 1;
            }
            counts.iter().all(|&c| c >= 2)
        });
        if !ok {
            break;
        }
        best = level;
    }
    best
}

fn node_count(grid: &Arc<Grid>, b: &Aabb) -> usize {
    grid.owned_nodes(b).len()
}

impl HierGreen {
    fn assemble(
        grid: Arc<Grid>,
        partition: AdmissiblePartition,
        kernel: CovKernelSpec,
        settings: LearnSettings,
        learned: Vec<(BoxPair, LowRankBlock, LowRankBlock)>,
    ) -> Result<Self> {
        let mut by_key: HashMap<(BoxIndex, BoxIndex), LowRankBlock> = HashMap::new();
        let learned_pairs = learned.len();
        for (pair, xy, yx) in learned {
            by_key.insert(pair.key(), xy);
            by_key.insert(pair.transposed().key(), yx);
        }
        let mut blocks = Vec::with_capacity(partition.admissible.len());
        let mut lookup = HashMap::new();
        for (i, pair) in partition.admissible.iter().enumerate() {
            let b = by_key
                .remove(&pair.key())
                .ok_or_else(|| Error::InvalidParameter(format!("missing block {} x {}", pair.x, pair.y)))?;
            blocks.push(b);
            lookup.insert(pair.key(), i);
        }
        let axis_boxes = (1..=partition.levels).map(|l| axis_box_maps(&grid, l)).collect();
        Ok(HierGreen { grid, partition, kernel, settings, blocks, lookup, axis_boxes, learned_pairs })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn partition(&self) -> &AdmissiblePartition {
        &self.partition
    }

    pub fn kernel(&self) -> &CovKernelSpec {
        &self.kernel
    }

    pub fn settings(&self) -> &LearnSettings {
        &self.settings
    }

    /// Blocks aligned with `partition().admissible`.
    pub fn blocks(&self) -> &[LowRankBlock] {
        &self.blocks
    }

    pub fn block(&self, x: BoxIndex, y: BoxIndex) -> Option<&LowRankBlock> {
        self.lookup.get(&(x, y)).map(|&i| &self.blocks[i])
    }

    pub fn learned_pairs(&self) -> usize {
        self.learned_pairs
    }

    pub fn total_queries(&self) -> usize {
        self.blocks.iter().map(|b| b.queries_used).sum()
    }

    fn box_of(&self, level: u32, node: usize) -> BoxIndex {
        let mi = self.grid.multi_index(node);
        let maps = &self.axis_boxes[level as usize - 1];
        let mut idx = [0u32; 3];
        for a in 0..self.grid.dim() {
            idx[a] = maps[a][mi[a]];
        }
        BoxIndex { level, idx }
    }

    /// `G̃(x_i, y_j)` at grid nodes.
    pub fn evaluate(&self, x: usize, y: usize) -> Result<f64> {
        let n = self.grid.len();
        if x >= n || y >= n {
            return Err(Error::OutsideDomain(format!("node pair ({x}, {y}) on a grid of {n} nodes")));
        }
        for level in 1..=self.partition.levels {
            if let Some(b) = self.block(self.box_of(level, x), self.box_of(level, y)) {
                let i = b.left_nodes.binary_search(&x).expect("box owns node");
                let j = b.right_nodes.binary_search(&y).expect("box owns node");
                return Ok(b.value(i, j));
            }
        }
        Ok(0.0)
    }

    /// `G̃(x, y)` at arbitrary points that coincide with grid nodes.
    pub fn evaluate_at(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let i = self.grid.node_index_of(x)?;
        let j = self.grid.node_index_of(y)?;
        self.evaluate(i, j)
    }

    /// `u(x_i) = Σ_j w_j G̃(x_i, y_j) f(y_j)`, panel by panel.
    pub fn apply_green(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        if f.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", f.len(), self.grid.len())));
        }
        let w = self.grid.weights();
        let mut u = DVector::zeros(f.len());
        for b in &self.blocks {
            if b.rank() == 0 {
                continue;
            }
            let wf = DVector::from_iterator(b.right_nodes.len(), b.right_nodes.iter().map(|&j| w[j] * f[j]));
            let coeff = b.right.values().tr_mul(&wf);
            let part = b.left.values() * coeff;
            for (r, &i) in b.left_nodes.iter().enumerate() {
                u[i] += part[r];
            }
        }
        Ok(u)
    }

    /// Dense table of `G̃` on the grid.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut g = DMatrix::zeros(n, n);
        for b in &self.blocks {
            let kb = b.kernel();
            for (c, &j) in b.right_nodes.iter().enumerate() {
                for (r, &i) in b.left_nodes.iter().enumerate() {
                    g[(i, j)] = kb[(r, c)];
                }
            }
        }
        g
    }

    pub fn to_document(&self) -> HierGreenDocument {
        let rows = |q: &Quasimatrix| -> Vec<Vec<f64>> {
            let v = q.values();
            (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect()
        };
        let pairs = self
            .partition
            .admissible
            .iter()
            .zip(&self.blocks)
            .filter(|(p, _)| p.x_index < p.y_index)
            .map(|(p, b)| {
                let yx = self.block(p.y_index, p.x_index).expect("both orientations stored");
                PairDocument {
                    x_index: p.x_index,
                    y_index: p.y_index,
                    left: rows(&b.left),
                    right: rows(&b.right),
                    queries_xy: b.queries_used,
                    queries_yx: yx.queries_used,
                }
            })
            .collect();
        HierGreenDocument {
            grid: GridDocument::from(self.grid.as_ref()),
            kernel: KernelDocument::from(&self.kernel),
            settings: self.settings.clone(),
            total_queries: self.total_queries(),
            learned_pairs: self.learned_pairs,
            admissible_blocks: self.blocks.len(),
            non_admissible_blocks: self.partition.non_admissible.len(),
            pairs,
        }
    }
}

/// Serializable covariance kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelDocument {
    SquaredExponential { length_scale: f64 },
    Tabulated { values: Vec<Vec<f64>> },
}

impl From<&CovKernelSpec> for KernelDocument {
    fn from(k: &CovKernelSpec) -> Self {
        match k {
            CovKernelSpec::SquaredExponential { length_scale } => KernelDocument::SquaredExponential { length_scale: *length_scale },
            CovKernelSpec::Tabulated(t) => {
                let v = t.values();
                KernelDocument::Tabulated { values: (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect() }
            }
        }
    }
}

impl KernelDocument {
    pub fn to_spec(&self) -> Result<CovKernelSpec> {
        match self {
            KernelDocument::SquaredExponential { length_scale } => CovKernelSpec::squared_exponential(*length_scale),
            KernelDocument::Tabulated { values } => {
                let n = values.len();
                if values.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidParameter("kernel table is not square".into()));
                }
                CovKernelSpec::tabulated(DMatrix::from_fn(n, n, |i, j| values[i][j]))
            }
        }
    }
}

/// One learned unordered pair; the `Y × X` block reuses the factors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairDocument {
    pub x_index: BoxIndex,
    pub y_index: BoxIndex,
    /// Rows are the nodes owned by `X`, columns the rank.
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub queries_xy: usize,
    pub queries_yx: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierGreenDocument {
    pub grid: GridDocument,
    pub kernel: KernelDocument,
    pub settings: LearnSettings,
    pub total_queries: usize,
    pub learned_pairs: usize,
    pub admissible_blocks: usize,
    pub non_admissible_blocks: usize,
    pub pairs: Vec<PairDocument>,
}

impl HierGreenDocument {
    pub fn to_green(&self) -> Result<HierGreen> {
        let grid = Arc::new(self.grid.to_uniform_grid()?);
        let s = &self.settings;
        let partition = build_partition_on(grid.bbox(), s.levels, s.rho)?;
        let domain = partition.domain;
        let mut learned = Vec::with_capacity(self.pairs.len());
        for pd in &self.pairs {
            let pair = BoxPair {
                x: pd.x_index.geometry(&domain),
                y: pd.y_index.geometry(&domain),
                level: pd.x_index.level,
                x_index: pd.x_index,
                y_index: pd.y_index,
            };
            let sx = grid.restrict(&pair.x)?;
            let sy = grid.restrict(&pair.y)?;
            let mat = |rows: &Vec<Vec<f64>>, sub: &crate::gp::SubGrid| -> Result<Quasimatrix> {
                let r = rows.first().map_or(0, |r| r.len());
                if rows.len() != sub.len() || rows.iter().any(|x| x.len() != r) {
                    return Err(Error::GridMismatch(format!("factor with {} rows for a box of {} nodes", rows.len(), sub.len())));
                }
                Quasimatrix::new(Arc::clone(&sub.grid), DMatrix::from_fn(rows.len(), r, |i, j| rows[i][j]))
            };
            let xy = LowRankBlock::from_factors(&sx, &sy, pair.x, pair.y, mat(&pd.left, &sx)?, mat(&pd.right, &sy)?, pd.queries_xy);
            let yx = xy.transposed(pd.queries_yx);
            learned.push((pair, xy, yx));
        }
        HierGreen::assemble(grid, partition, self.kernel.to_spec()?, s.clone(), learned)
    }
}

fn resolve_levels(grid: &Grid, opts: &LearnOptions) -> Result<u32> {
    let requested = match opts.levels {
        Some(n) => n,
        None => choose_levels(opts.epsilon, opts.c_kappa)?,
    };
    let cap = max_levels_for_grid(grid);
    if cap == 0 {
        return Err(Error::InvalidGrid("grid too coarse for a single level of refinement".into()));
    }
    if requested > cap {
        log::warn!("clamping hierarchy depth from {requested} to {cap} levels for this grid");
    }
    Ok(requested.min(cap).max(1))
}

fn resolve_ranks(opts: &LearnOptions, min_nodes: usize) -> Result<(usize, usize)> {
    let k0 = match opts.k {
        Some(k) => k,
        None => target_rank(opts.epsilon, opts.c_sep)?,
    };
    let p0 = opts.p.unwrap_or(k0);
    if k0 + p0 <= min_nodes {
        return Ok((k0, p0));
    }
    let (k, p) = if opts.p.is_some() { (min_nodes.saturating_sub(p0), p0) } else { (min_nodes / 2, min_nodes / 2) };
    if k < 1 || p < 2 {
        return Err(Error::InvalidParameter(format!(
            "boxes own only {min_nodes} nodes; k + p = {} cannot be clamped to a usable size, use a finer grid",
            k0 + p0
        )));
    }
    log::warn!("clamping (k, p) from ({k0}, {p0}) to ({k}, {p}) to fit boxes of {min_nodes} nodes");
    Ok((k, p))
}

/// Learn a hierarchical approximant of the operator behind `oracle`, which must
/// be self-adjoint. Both grids of the oracle must coincide.
pub fn learn_green(oracle: &dyn BlackBox, kernel: &CovKernelSpec, opts: &LearnOptions) -> Result<HierGreen> {
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", opts.epsilon)));
    }
    crate::gp::quasimatrix::same_grid(oracle.input_grid(), oracle.output_grid())?;
    let grid = Arc::clone(oracle.input_grid());
    let levels = resolve_levels(&grid, opts)?;
    let partition = build_partition_on(grid.bbox(), levels, opts.rho)?;
    let pairs = partition.unordered_admissible();

    let mut boxes: HashMap<BoxIndex, Aabb> = HashMap::new();
    for p in &pairs {
        boxes.insert(p.x_index, p.x);
        boxes.insert(p.y_index, p.y);
    }
    let min_nodes = boxes.values().map(|b| node_count(&grid, b)).min().unwrap_or(usize::MAX);
    let (k, p) = resolve_ranks(opts, min_nodes)?;

    // one Mercer basis per distinct sampling box
    let mut ys: Vec<BoxIndex> = pairs.iter().map(|p| p.y_index).collect();
    ys.sort();
    ys.dedup();
    let bases: HashMap<BoxIndex, MercerBasis> = ys
        .par_iter()
        .map(|y| block_basis(kernel, &grid, &boxes[y]).map(|b| (*y, b)))
        .collect::<Result<_>>()?;

    let seed = opts.seed;
    let learned: Vec<(BoxPair, LowRankBlock, LowRankBlock)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let (xy, yx) = learn_block_with_basis(oracle, &bases[&pair.y_index], &pair.x, &pair.y, k, p, derive_seed(seed, i as u64))?;
            Ok((*pair, xy, yx))
        })
        .collect::<Result<_>>()?;

    let settings = LearnSettings {
        epsilon: opts.epsilon,
        effective_epsilon: effective_epsilon(levels, opts.c_kappa).min(1.0),
        k,
        p,
        levels,
        rho: opts.rho,
        seed,
    };
    HierGreen::assemble(grid, partition, kernel.clone(), settings, learned)
}

/// Verification approximant: the best rank-`k` truncation of the reference on
/// every admissible block, with no oracle calls.
pub fn truncated_reference(reference: &DenseGreen, kernel: &CovKernelSpec, levels: u32, rho: f64, k: usize) -> Result<HierGreen> {
    let grid = Arc::clone(reference.grid());
    let partition = build_partition_on(grid.bbox(), levels, rho)?;
    let learned = partition
        .unordered_admissible()
        .par_iter()
        .map(|pair| {
            let op = reference.block(&pair.x, &pair.y)?;
            let svd = weighted_svd(&op)?;
            let r = k.min(svd.singular_values.len());
            let mut left = svd.left.values().columns(0, r).into_owned();
            for j in 0..r {
                left.column_mut(j).scale_mut(svd.singular_values[j]);
            }
            let right = svd.right.values().columns(0, r).into_owned();
            let sx = grid.restrict(&pair.x)?;
            let sy = grid.restrict(&pair.y)?;
            let xy = LowRankBlock::from_factors(
                &sx,
                &sy,
                pair.x,
                pair.y,
                Quasimatrix::new(Arc::clone(&sx.grid), left)?,
                Quasimatrix::new(Arc::clone(&sy.grid), right)?,
                0,
            );
            let yx = xy.transposed(0);
            Ok((*pair, xy, yx))
        })
        .collect::<Result<Vec<_>>>()?;
    let eps = effective_epsilon(levels, 1.0).min(1.0);
    let settings = LearnSettings { epsilon: eps, effective_epsilon: eps, k, p: 0, levels, rho, seed: 0 };
    HierGreen::assemble(grid, partition, kernel.clone(), settings, learned)
}
