//! Covariance-aware randomized range finding, the kernel-quality factor and
//! evaluators for the associated error bounds.
//!
//! The range finder only talks to operators through [`BlackBox`](crate::hsops::BlackBox).
//! Evaluators that need the singular system of the operator take a dense
//! reference and are meant for verification.

mod bounds;
mod montecarlo;
mod quality;
mod range;

pub use bounds::{deterministic_bound, evaluate_expectation_bound, evaluate_probability_bound};
pub use montecarlo::{
    deterministic_bound_suite, expectation_check, omega2_tail_check, pinv_norm_statistics,
    sigma2_omega2_energy_check, DeterministicSuite, EnergyCheck, ExceedancePoint, ExpectationCheck,
    PinvStatistics, TailCheck, OMEGA_S_VALUES, PINV_T_VALUES,
};
pub use quality::{
    covariance_capture, gamma_lower_sum, gamma_upper_sum, KernelQuality, COVARIANCE_FLOOR,
};
pub use range::{randomized_range, randomized_range_with_reference, synthetic_operator, RangeResult};
