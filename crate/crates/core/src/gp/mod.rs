//! Grids, covariance kernels, Mercer bases and Karhunen–Loève sampling.

pub mod grid;
pub mod kernel;
pub mod mercer;
pub mod quasimatrix;

pub use grid::{Aabb, Grid, Point, SubGrid};
pub use kernel::{restrict_kernel, CovKernelSpec, KernelTable, RestrictedKernel};
pub use mercer::{build_mercer, sample_gp, GridDocument, MercerBasis, MercerDocument, DEFAULT_RANK_CUTOFF};
pub use quasimatrix::{extend_by_zero, Quasimatrix};
