//! Reconstruction of Green's functions of divergence-form elliptic operators
//! from input-output pairs.
//!
//! The pipeline samples Gaussian-process right-hand sides ([`gp`]), feeds them to
//! a black-box solver ([`oracle`]), captures each well-separated block of the
//! Green's function with a covariance-aware randomized range finder ([`rsvd`])
//! and assembles the blocks on a hierarchical partition ([`partition`],
//! [`reconstruct`]). Dense references and bound evaluators are available for
//! verification at desk scale.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod gp;
pub mod hsops;
pub mod io;
pub mod oracle;
pub mod partition;
pub mod reconstruct;
pub mod rng;
pub mod rsvd;

pub use error::{Error, Result};
