//! Variance-covariance risk contributions for credit portfolios.
//!
//! This crate decomposes the standard deviation of a credit portfolio's value
//! at a risk horizon into additive per-loan (Euler) contributions,
//!
//! ```text
//! sigma_p = sum_i sigma_c_i,    sigma_c_i = cov(v_i, v_p) / sigma_p,
//! ```
//!
//! for a Gaussian multi-factor model of borrower asset returns in which each
//! loan's horizon value reflects default, maturity, and credit-quality
//! migration, optionally with Beta-distributed stochastic recovery.
//!
//! The naive covariance sum is quadratic in the number of loans. The engine
//! in [`allocator`] instead expands each loan's value function in Hermite
//! polynomials; pairwise covariances then factor through a small set of
//! symmetric moment tensors of the factor loadings, and the whole allocation
//! costs O(N) tensor contractions. Two independent reference engines live in
//! [`oracle`]: a brute-force pairwise quadrature and a Monte Carlo simulator,
//! both used by the test suite to validate the fast path.
//!
//! Crate layout:
//!
//! * [`math`] - scalar kernels: Hermite polynomials, normal and bivariate
//!   normal distributions, Gaussian quadrature rules.
//! * [`factor`] - borrower factor loadings and asset correlations.
//! * [`valuation`] - loan horizon values and their Hermite coefficients.
//! * [`allocator`] - the linear-time contribution engine.
//! * [`oracle`] - brute-force and Monte Carlo reference engines.
//! * [`io`] / [`synth`] - portfolio, config, report files; synthetic books.

pub mod allocator;
pub mod error;
pub mod factor;
pub mod io;
pub mod math;
pub mod oracle;
pub mod portfolio;
pub mod synth;
pub mod valuation;

pub(crate) mod accum;
pub(crate) mod rng;

pub use allocator::{allocate, AllocationReport};
pub use error::{Error, Result};
pub use portfolio::Portfolio;
pub use valuation::ModelConfig;
