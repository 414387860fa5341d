//! Black-box elliptic solver and dense reference Green's functions.
//!
//! [`EllipticOracle`] discretizes `−∇·(A ∇u) = f` with homogeneous Dirichlet
//! data by a conservative finite-difference stencil and answers queries with a
//! banded Cholesky factorization. Grid functions live on the full grid,
//! boundary nodes included; inputs are ignored on the boundary and outputs
//! vanish there.

mod banded;
mod coefficient;
mod dense;
mod elliptic;

pub use banded::BandedCholesky;
pub use coefficient::{kappa_c, CoefficientField};
pub use dense::{dense_green, dense_green_with_cap, non_admissible_block_factor, DenseGreen, DENSE_CAP};
pub use elliptic::{assemble, EllipticOracle, Metered, RESIDUAL_TOL};
