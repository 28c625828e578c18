//! Scalar math kernels: Hermite polynomials, normal distributions,
//! Gaussian quadrature.

pub mod beta;
pub mod hermite;
pub mod normal;
pub mod quadrature;

pub use hermite::{hermite_he, MAX_ORDER};
pub use normal::{bivariate_norm_cdf, norm_cdf, norm_inv_cdf, norm_pdf, norm_sf};
pub use quadrature::{quad_normal, NormalIntegrator, QuadratureRule, RuleKind, Split};
