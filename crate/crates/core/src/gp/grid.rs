use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in up to three dimensions; unused trailing coordinates stay zero.
pub type Point = [f64; 3];

/// Relative slack used when assigning nodes that sit on box faces.
const FACE_TOL: f64 = 1e-12;

/// Axis-aligned box `[lo, hi]` in `dim` dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        if !(1..=3).contains(&dim) || hi.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "box needs 1..=3 matching bounds, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        let mut b = Aabb { dim, lo: [0.0; 3], hi: [0.0; 3] };
        for a in 0..dim {
            if !(hi[a] > lo[a]) {
                return Err(Error::InvalidGrid(format!("empty interval on axis {a}")));
            }
            b.lo[a] = lo[a];
            b.hi[a] = hi[a];
        }
        Ok(b)
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        let mut b = Aabb { dim, lo: [0.0; 3], hi: [0.0; 3] };
        for a in 0..dim {
            b.hi[a] = 1.0;
        }
        b
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.width(a)).product()
    }

    pub fn diam(&self) -> f64 {
        (0..self.dim).map(|a| self.width(a).powi(2)).sum::<f64>().sqrt()
    }

    /// Euclidean distance between two boxes, from per-axis interval gaps.
    pub fn dist(&self, other: &Aabb) -> f64 {
        (0..self.dim)
            .map(|a| {
                let gap = (other.lo[a] - self.hi[a]).max(self.lo[a] - other.hi[a]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance from a point to the box (zero inside).
    pub fn dist_to_point(&self, p: &Point) -> f64 {
        (0..self.dim)
            .map(|a| {
                let gap = (self.lo[a] - p[a]).max(p[a] - self.hi[a]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains_closed(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| {
            let tol = FACE_TOL * self.width(a).max(1.0);
            p[a] >= self.lo[a] - tol && p[a] <= self.hi[a] + tol
        })
    }

    /// Half-open ownership test: `[lo, hi)` on each axis, except that a face lying
    /// on the upper face of `domain` is closed. Boxes of a partition of `domain`
    /// therefore own disjoint node sets that cover the grid.
    pub fn owns(&self, p: &Point, domain: &Aabb) -> bool {
        (0..self.dim).all(|a| self.owns_coordinate(a, p[a], domain))
    }

    /// Per-axis part of [`Aabb::owns`].
    pub fn owns_coordinate(&self, axis: usize, x: f64, domain: &Aabb) -> bool {
        let tol = FACE_TOL * domain.width(axis).max(1.0);
        let closed_top = self.hi[axis] >= domain.hi[axis] - tol;
        x >= self.lo[axis] - tol && (x < self.hi[axis] - tol || (closed_top && x <= self.hi[axis] + tol))
    }

    pub fn intersect(&self, other: &Aabb) -> Option<Aabb> {
        let mut out = *self;
        for a in 0..self.dim {
            out.lo[a] = self.lo[a].max(other.lo[a]);
            out.hi[a] = self.hi[a].min(other.hi[a]);
            if out.hi[a] < out.lo[a] {
                return None;
            }
        }
        Some(out)
    }
}

impl fmt::Display for Aabb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.dim)
            .map(|a| format!("[{}, {}]", self.lo[a], self.hi[a]))
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Tensor-product grid of a box with trapezoid quadrature weights.
///
/// Nodes are ordered with axis 0 varying fastest. Sub-grids produced by
/// [`Grid::restrict`] keep the parent's weights, so the volume identity only holds
/// for grids built with [`Grid::uniform`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    bbox: Aabb,
    shape: [usize; 3],
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

impl Grid {
    /// Uniform grid with `nodes_per_axis` nodes on each axis (endpoints included).
    pub fn uniform(bbox: Aabb, nodes_per_axis: usize) -> Result<Self> {
        if nodes_per_axis < 2 {
            return Err(Error::InvalidGrid("need at least 2 nodes per axis".into()));
        }
        let dim = bbox.dim;
        let mut shape = [1usize; 3];
        for s in shape.iter_mut().take(dim) {
            *s = nodes_per_axis;
        }
        let axis_values: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
            .map(|a| {
                let h = bbox.width(a) / (nodes_per_axis - 1) as f64;
                let x = (0..nodes_per_axis)
                    .map(|i| {
                        if i == nodes_per_axis - 1 {
                            bbox.hi[a]
                        } else {
                            bbox.lo[a] + i as f64 * h
                        }
                    })
                    .collect();
                let w = (0..nodes_per_axis)
                    .map(|i| if i == 0 || i == nodes_per_axis - 1 { 0.5 * h } else { h })
                    .collect();
                (x, w)
            })
            .collect();

        let total: usize = shape.iter().product();
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = unravel(flat, &shape);
            let mut p = [0.0; 3];
            let mut w = 1.0;
            for a in 0..dim {
                p[a] = axis_values[a].0[idx[a]];
                w *= axis_values[a].1[idx[a]];
            }
            nodes.push(p);
            weights.push(w);
        }
        Ok(Grid { dim, bbox, shape, nodes, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// Per-axis node counts (1 on unused axes).
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Multi-index of a node (axis 0 fastest).
    pub fn multi_index(&self, node: usize) -> [usize; 3] {
        unravel(node, &self.shape)
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.shape[0] * (idx[1] + self.shape[1] * idx[2])
    }

    /// Whether a node lies on the boundary of the bounding box.
    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.multi_index(node);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] + 1 == self.shape[a])
    }

    /// Weighted inner product `Σ w_i f_i g_i`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Index of the grid node at `p`, if any node coincides with it.
    pub fn node_index_of(&self, p: &[f64]) -> Result<usize> {
        if p.len() != self.dim {
            return Err(Error::OutsideDomain(format!("{p:?}")));
        }
        let mut q = [0.0; 3];
        q[..self.dim].copy_from_slice(p);
        if !self.bbox.contains_closed(&q) {
            return Err(Error::OutsideDomain(format!("{p:?}")));
        }
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            if self.shape[a] == 1 {
                continue;
            }
            let h = self.bbox.width(a) / (self.shape[a] - 1) as f64;
            idx[a] = ((q[a] - self.bbox.lo[a]) / h).round() as usize;
        }
        let node = self.flat_index(idx);
        let hit = (0..self.dim).all(|a| (self.nodes[node][a] - q[a]).abs() <= 1e-9 * self.bbox.width(a));
        if hit {
            Ok(node)
        } else {
            Err(Error::OutsideDomain(format!("{p:?} is not a grid node")))
        }
    }

    /// Nodes owned by `sub` under the half-open convention (see [`Aabb::owns`]).
    pub fn owned_nodes(&self, sub: &Aabb) -> Vec<usize> {
        (0..self.len()).filter(|&i| sub.owns(&self.nodes[i], &self.bbox)).collect()
    }

    /// Restrict to the nodes owned by `sub`; weights are inherited.
    pub fn restrict(self: &Arc<Self>, sub: &Aabb) -> Result<SubGrid> {
        if sub.dim != self.dim {
            return Err(Error::GridMismatch(format!(
                "sub-box has dim {} but grid has dim {}",
                sub.dim, self.dim
            )));
        }
        let parent_index = self.owned_nodes(sub);
        if parent_index.is_empty() {
            return Err(Error::EmptyRestriction(sub.to_string()));
        }
        let mut shape = [1usize; 3];
        for a in 0..self.dim {
            let mut seen: Vec<usize> = parent_index.iter().map(|&i| self.multi_index(i)[a]).collect();
            seen.sort_unstable();
            seen.dedup();
            shape[a] = seen.len();
        }
        let bbox = sub.intersect(&self.bbox).unwrap_or(*sub);
        let grid = Grid {
            dim: self.dim,
            bbox,
            shape,
            nodes: parent_index.iter().map(|&i| self.nodes[i]).collect(),
            weights: parent_index.iter().map(|&i| self.weights[i]).collect(),
        };
        Ok(SubGrid { parent: Arc::clone(self), grid: Arc::new(grid), parent_index })
    }

    /// Look for violations of the quadrature invariants of a uniform grid.
    pub fn check_quadrature(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        let vol = self.bbox.volume();
        if ((total - vol) / vol).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!("weights sum to {total}, volume is {vol}")));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidGrid("non-positive weight".into()));
        }
        if !self.nodes.iter().all(|p| self.bbox.contains_closed(p)) {
            return Err(Error::InvalidGrid("node outside box".into()));
        }
        Ok(())
    }
}

fn unravel(flat: usize, shape: &[usize; 3]) -> [usize; 3] {
    [flat % shape[0], (flat / shape[0]) % shape[1], flat / (shape[0] * shape[1])]
}

/// A grid restricted to a sub-box, remembering where each node came from.
#[derive(Clone, Debug)]
pub struct SubGrid {
    pub parent: Arc<Grid>,
    pub grid: Arc<Grid>,
    /// Parent node index of every sub-grid node (strictly increasing).
    pub parent_index: Vec<usize>,
}

impl SubGrid {
    pub fn len(&self) -> usize {
        self.parent_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent_index.is_empty()
    }

    /// Sub-grid position of a parent node, if the node belongs to this sub-grid.
    pub fn local_index(&self, parent_node: usize) -> Option<usize> {
        self.parent_index.binary_search(&parent_node).ok()
    }

    /// Values of a parent-grid function on the sub-grid nodes.
    pub fn restrict_values(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.parent.len() {
            return Err(Error::GridMismatch(format!(
                "function has {} values, parent grid has {} nodes",
                f.len(),
                self.parent.len()
            )));
        }
        Ok(self.parent_index.iter().map(|&i| f[i]).collect())
    }

    /// Zero extension of a sub-grid function to the parent grid.
    pub fn extend_values(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "function has {} values, sub-grid has {} nodes",
                f.len(),
                self.len()
            )));
        }
        let mut out = vec![0.0; self.parent.len()];
        for (&i, &v) in self.parent_index.iter().zip(f) {
            out[i] = v;
        }
        Ok(out)
    }
}
