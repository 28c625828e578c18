//! Reference implementations used to validate the production allocator:
//! a quadratic-cost pairwise quadrature and a Monte Carlo simulator.

mod brute;
mod mc;

pub use brute::{brute_force_contributions, pairwise_covariance, BRUTE_FORCE_MAX_LOANS};
pub use mc::{convergence_study, mc_simulate, ConvergenceRow, McConfig, McStats};
