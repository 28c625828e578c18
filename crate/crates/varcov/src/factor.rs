//! Gaussian multi-factor correlation structure.
//!
//! Each borrower's asset return decomposes as
//! `eps = r * (beta . eta) + sqrt(1 - r^2) * xi` with independent standard
//! normal factors `eta` and idiosyncratic noise `xi`. With `beta` unit-norm,
//! `eps` is standard normal and the correlation between two borrowers is
//! `r_a * r_b * (beta_a . beta_b)`.

use crate::error::{Error, Result};

/// Unit-norm tolerance enforced on loadings.
pub const BETA_NORM_TOL: f64 = 1e-8;
/// Deviations up to this much from unit norm may be repaired by
/// renormalization instead of rejected.
pub const BETA_RENORM_TOL: f64 = 1e-3;

/// One borrower's systematic weight and factor loadings.
///
/// `r` is the weight on the systematic part (so `r^2` is the systematic
/// variance share); `beta` directs it across factors and must have unit
/// Euclidean norm unless `r` is zero, in which case the direction is
/// irrelevant and an all-zero `beta` is accepted.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorLoadings {
    pub r: f64,
    pub beta: Vec<f64>,
}

impl FactorLoadings {
    pub fn new(r: f64, beta: Vec<f64>) -> Result<Self> {
        let loadings = FactorLoadings { r, beta };
        loadings.validate(loadings.beta.len())?;
        Ok(loadings)
    }

    /// Purely idiosyncratic loadings: no systematic exposure at all.
    pub fn idiosyncratic(n_factors: usize) -> Self {
        FactorLoadings {
            r: 0.0,
            beta: vec![0.0; n_factors],
        }
    }

    pub fn n_factors(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_norm_sq(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum()
    }

    pub fn validate(&self, n_factors: usize) -> Result<()> {
        if !self.r.is_finite() || !(0.0..=1.0).contains(&self.r) {
            return Err(Error::Validation(format!(
                "systematic weight r = {} outside [0, 1]",
                self.r
            )));
        }
        if self.beta.len() != n_factors {
            return Err(Error::Dimension(format!(
                "loadings have {} factor entries, portfolio has {n_factors} factors",
                self.beta.len()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("non-finite factor loading".into()));
        }
        if self.r > 0.0 {
            let norm_sq = self.beta_norm_sq();
            if (norm_sq - 1.0).abs() > BETA_NORM_TOL {
                return Err(Error::Validation(format!(
                    "factor loadings have squared norm {norm_sq}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Rescale `beta` to exact unit norm. Errors when the deviation exceeds
    /// [`BETA_RENORM_TOL`] or the norm is zero while `r > 0`.
    pub fn renormalize(&mut self) -> Result<bool> {
        if self.r == 0.0 {
            return Ok(false);
        }
        let norm = self.beta_norm_sq().sqrt();
        if (norm - 1.0).abs() > BETA_RENORM_TOL {
            return Err(Error::Validation(format!(
                "factor loadings have norm {norm}, too far from 1 to repair"
            )));
        }
        if (norm - 1.0).abs() <= f64::EPSILON {
            return Ok(false);
        }
        for b in &mut self.beta {
            *b /= norm;
        }
        Ok(true)
    }
}

/// An obligor: one latent asset-return variable shared by all of its loans.
#[derive(Clone, Debug)]
pub struct Borrower {
    pub borrower_id: String,
    pub loadings: FactorLoadings,
    pub loan_ids: Vec<String>,
}

impl Borrower {
    pub fn new(borrower_id: impl Into<String>, loadings: FactorLoadings) -> Self {
        Borrower {
            borrower_id: borrower_id.into(),
            loadings,
            loan_ids: Vec::new(),
        }
    }
}

/// Correlation between two borrowers' asset returns: `r_a r_b (beta_a . beta_b)`,
/// clamped to [-1, 1] against accumulated roundoff.
pub fn asset_correlation(a: &FactorLoadings, b: &FactorLoadings) -> Result<f64> {
    if a.beta.len() != b.beta.len() {
        return Err(Error::Dimension(format!(
            "factor dimension mismatch: {} vs {}",
            a.beta.len(),
            b.beta.len()
        )));
    }
    let dot: f64 = a.beta.iter().zip(&b.beta).map(|(x, y)| x * y).sum();
    Ok((a.r * b.r * dot).clamp(-1.0, 1.0))
}

/// Outcome of portfolio-level loading validation.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Check every borrower's loadings against the portfolio factor dimension.
/// With `renormalize` set, near-unit loadings (within [`BETA_RENORM_TOL`])
/// are rescaled in place and flagged as warnings; anything further off, a
/// dimension mismatch, or `r` outside [0, 1] lands in `errors`.
pub fn validate_portfolio_factors(
    borrowers: &mut [Borrower],
    n_factors: usize,
    renormalize: bool,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    for b in borrowers.iter_mut() {
        match b.loadings.validate(n_factors) {
            Ok(()) => {}
            Err(Error::Validation(msg)) if renormalize && msg.contains("squared norm") => {
                match b.loadings.renormalize() {
                    Ok(true) => report
                        .warnings
                        .push(format!("borrower {}: loadings renormalized", b.borrower_id)),
                    Ok(false) => {}
                    Err(e) => report
                        .errors
                        .push(format!("borrower {}: {e}", b.borrower_id)),
                }
            }
            Err(e) => report
                .errors
                .push(format!("borrower {}: {e}", b.borrower_id)),
        }
    }
    report
}
