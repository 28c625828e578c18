//! Loan value at the risk horizon and its Hermite expansion.
//!
//! A loan's horizon value is a function of its borrower's standard normal
//! asset return `eps` with three regimes:
//!
//! * default (`eps <= -d` where `Phi(-d)` is the horizon default
//!   probability): recovery value `(1 - l) v0 df`;
//! * no default, loan already matured (`t_m <= t_h`): the discounted face
//!   `v0 df` is received in full;
//! * no default, maturity past the horizon: risk-neutral revaluation that
//!   prices expected credit migration, a smooth increasing function of
//!   `eps` between `(1 - l) v0 df` and `v0 df`.
//!
//! Here `df = exp(-r (t_m - t_h))`. The Hermite coefficients
//! `v^(n) = (1/sqrt(n!)) E[v(eps) He_n(eps)]` drive both the covariance
//! series and the portfolio tensor accumulation. Piecewise-constant regions
//! contribute in closed form through the identity
//! `int_{-inf}^{a} He_n(x) n(x) dx = -He_{n-1}(a) n(a)`; only the migration
//! regime needs quadrature.
//!
//! Losses on default are Beta-distributed around mean `l` with variance
//! `l (1 - l) / k`, independent of asset returns, so recovery uncertainty
//! enters variances as a separate additive term rather than through the
//! value function.

use crate::error::{Error, Result};
use crate::factor::FactorLoadings;
use crate::math::hermite::{hermite_he_all, MAX_ORDER};
use crate::math::normal::{norm_cdf, norm_inv_cdf, norm_pdf, norm_sf, SQRT_2PI};
use crate::math::quadrature::{hermite_lower_tail, hermite_upper_tail, NormalIntegrator, Split};

/// One loan position. `pd_horizon` and `pd_maturity` are cumulative default
/// probabilities to the horizon and to maturity; `lgd` is the mean loss
/// fraction on default; `v0` is the contractual amount payable at maturity.
#[derive(Clone, Debug, PartialEq)]
pub struct Loan {
    pub loan_id: String,
    pub borrower_id: String,
    pub v0: f64,
    pub t_m: f64,
    pub pd_horizon: f64,
    pub pd_maturity: f64,
    pub lgd: f64,
}

impl Loan {
    /// Field-level invariants. `lgd = 0` is accepted as the riskless limit
    /// (the value function degenerates to a constant).
    pub fn validate(&self, t_h: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("loan {}: {msg}", self.loan_id)));
        if self.loan_id.is_empty() {
            return Err(Error::Validation("loan with empty id".into()));
        }
        if self.borrower_id.is_empty() {
            return fail("empty borrower id".into());
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return fail(format!("notional {} must be positive", self.v0));
        }
        if !(self.t_m > 0.0 && self.t_m.is_finite()) {
            return fail(format!("maturity {} must be positive", self.t_m));
        }
        for (name, p) in [
            ("pd_horizon", self.pd_horizon),
            ("pd_maturity", self.pd_maturity),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return fail(format!("{name} = {p} outside (0, 1)"));
            }
        }
        if self.t_m > t_h && self.pd_horizon > self.pd_maturity {
            return fail(format!(
                "pd_horizon {} exceeds pd_maturity {}",
                self.pd_horizon, self.pd_maturity
            ));
        }
        if !((0.0..=1.0).contains(&self.lgd)) {
            return fail(format!("lgd {} outside [0, 1]", self.lgd));
        }
        Ok(())
    }
}

/// Quadrature controls for coefficient and oracle integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSettings {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// Base panel width in standard deviations.
    pub panel_width: f64,
    /// Half-width of the integration window; beyond it integrands are
    /// treated as settled constants.
    pub cutoff: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            nodes: 64,
            panel_width: 1.0,
            cutoff: 8.0,
        }
    }
}

/// Model-level parameters shared by every loan.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Risk horizon in years.
    pub horizon_years: f64,
    /// Flat annual risk-free rate.
    pub risk_free_rate: f64,
    /// Market price of risk in the migration revaluation drift.
    pub lambda_mpr: f64,
    /// Beta-recovery dispersion: loss variance on default is
    /// `l (1 - l) / recovery_k`. `INFINITY` selects deterministic recovery.
    pub recovery_k: f64,
    /// Series truncation order.
    pub n_max: usize,
    pub quad: QuadSettings,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            horizon_years: 1.0,
            risk_free_rate: 0.04,
            lambda_mpr: 0.4,
            recovery_k: 4.0,
            n_max: 3,
            quad: QuadSettings::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_years > 0.0 && self.horizon_years.is_finite()) {
            return Err(Error::Validation(format!(
                "horizon {} must be positive",
                self.horizon_years
            )));
        }
        if !self.risk_free_rate.is_finite() || !self.lambda_mpr.is_finite() {
            return Err(Error::Validation(
                "risk-free rate and market price of risk must be finite".into(),
            ));
        }
        if !(self.recovery_k > 1.0) {
            return Err(Error::Validation(format!(
                "recovery dispersion k = {} must exceed 1 (or be infinite)",
                self.recovery_k
            )));
        }
        if self.n_max < 1 || self.n_max > MAX_ORDER {
            return Err(Error::Validation(format!(
                "series order n_max = {} outside [1, {MAX_ORDER}]",
                self.n_max
            )));
        }
        if self.quad.nodes < 2 || self.quad.nodes > 512 {
            return Err(Error::Validation(format!(
                "quadrature nodes {} outside [2, 512]",
                self.quad.nodes
            )));
        }
        if !(self.quad.panel_width > 0.0 && self.quad.panel_width.is_finite()) {
            return Err(Error::Validation("panel width must be positive".into()));
        }
        if !(self.quad.cutoff >= 2.0 && self.quad.cutoff.is_finite()) {
            return Err(Error::Validation(
                "integration cutoff must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn integrator(&self) -> Result<NormalIntegrator> {
        NormalIntegrator::new(self.quad.nodes, self.quad.panel_width, self.quad.cutoff)
    }
}

/// Distance to default: the `d` with `Phi(-d) = p`, i.e. `-Phi^{-1}(p)`.
pub fn distance_to_default(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "default probability {p} outside (0, 1)"
        )));
    }
    Ok(-norm_inv_cdf(p)?)
}

/// Smooth migration regime of the value function:
/// `v(eps) = v_base (1 - l Phi(u0 - u1 eps))` for surviving loans maturing
/// after the horizon.
#[derive(Clone, Copy, Debug)]
pub struct Migration {
    pub u0: f64,
    pub u1: f64,
    pub lgd: f64,
}

/// A loan's horizon value as a function of the borrower asset return, in
/// evaluatable form. Shared by the coefficient pipeline, the brute-force
/// oracle, and the Monte Carlo simulator so that all three price identically.
#[derive(Clone, Debug)]
pub struct ValueFn {
    /// Default iff `eps <= threshold` (threshold = -d).
    pub threshold: f64,
    /// Value in default at mean recovery: `(1 - l) v0 df`.
    pub v_default: f64,
    /// Discounted face `v0 df`; the survival value when no migration
    /// revaluation applies.
    pub v_base: f64,
    pub migration: Option<Migration>,
}

impl ValueFn {
    pub fn new(loan: &Loan, r_borrower: f64, cfg: &ModelConfig) -> Result<ValueFn> {
        let d = distance_to_default(loan.pd_horizon)?;
        let dt = loan.t_m - cfg.horizon_years;
        let df = (-cfg.risk_free_rate * dt).exp();
        let v_base = loan.v0 * df;
        let v_default = (1.0 - loan.lgd) * v_base;
        if !v_base.is_finite() {
            return Err(Error::Numerical(format!(
                "loan {}: non-finite discounted value",
                loan.loan_id
            )));
        }
        // lgd = 0 makes migration a no-op; fold it into the constant branch
        // so downstream code sees an exactly constant survival value.
        let migration = if dt > 0.0 && loan.lgd > 0.0 {
            let b = norm_inv_cdf(loan.pd_maturity)?
                + cfg.lambda_mpr * r_borrower * dt / loan.t_m.sqrt();
            let u0 = b * (loan.t_m / dt).sqrt();
            let u1 = (cfg.horizon_years / dt).sqrt();
            if !u0.is_finite() || !u1.is_finite() {
                return Err(Error::Numerical(format!(
                    "loan {}: non-finite migration parameters",
                    loan.loan_id
                )));
            }
            Some(Migration {
                u0,
                u1,
                lgd: loan.lgd,
            })
        } else {
            None
        };
        Ok(ValueFn {
            threshold: -d,
            v_default,
            v_base,
            migration,
        })
    }

    /// Value conditional on survival.
    pub fn survive_value(&self, eps: f64) -> f64 {
        match self.migration {
            None => self.v_base,
            Some(m) => self.v_base * (1.0 - m.lgd * norm_cdf(m.u0 - m.u1 * eps)),
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        if eps <= self.threshold {
            self.v_default
        } else {
            self.survive_value(eps)
        }
    }

    /// Discounted face `v0 df`, the scale of the recovery-uncertainty terms.
    pub fn discounted_face(&self) -> f64 {
        self.v_base
    }

    /// Quadrature split points: the default boundary, plus the midpoint of
    /// the migration sigmoid with its feature width for panel grading.
    pub fn splits(&self) -> Vec<Split> {
        let mut out = vec![Split::plain(self.threshold)];
        if let Some(m) = self.migration {
            out.push(Split::scaled(m.u0 / m.u1, 1.0 / m.u1));
        }
        out
    }
}

/// Hermite expansion of one loan's value function.
#[derive(Clone, Debug)]
pub struct HermiteCoefficients {
    pub loan_id: String,
    /// E[v(eps)].
    pub mean: f64,
    /// `coeffs[n-1]` holds `v^(n)` for n = 1..=n_max.
    pub coeffs: Vec<f64>,
    /// Var[v(eps)] at mean recovery (no loss-uncertainty term).
    pub variance_eps: f64,
    /// `variance_eps` plus the recovery-uncertainty term
    /// `p l (1 - l) / k (v0 df)^2`.
    pub standalone_variance: f64,
}

impl HermiteCoefficients {
    /// `v^(n)`, 1-based order.
    pub fn v_n(&self, n: usize) -> f64 {
        self.coeffs[n - 1]
    }
}

/// Expansion coefficient of a pure default/survival payoff with unit
/// notional: value `1 - l` for `eps <= d_boundary`, `1` above. Returns
/// `l e^{-d^2/2} He_{n-1}(d) / sqrt(2 pi n!)` for order `n >= 1`.
///
/// A loan with distance to default `delta` defaults on `eps <= -delta`, so
/// callers pass `d_boundary = -delta` and scale by the discounted face.
pub fn default_only_coeff(d_boundary: f64, l: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("coefficient order must be >= 1".into()));
    }
    let mut he = vec![0.0; n];
    hermite_he_all(d_boundary, &mut he);
    let mut sqrt_fact = 1.0;
    for k in 1..=n {
        sqrt_fact *= (k as f64).sqrt();
    }
    Ok(l * (-0.5 * d_boundary * d_boundary).exp() * he[n - 1] / (SQRT_2PI * sqrt_fact))
}

/// Shape parameters of the Beta loss distribution with mean `l` and
/// variance `l (1 - l) / k`: `a = l (k - 1)`, `b = (1 - l) (k - 1)`.
pub fn beta_recovery_params(l: f64, k: f64) -> Result<(f64, f64)> {
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::Domain(format!(
            "loss mean {l} admits no spread; use the deterministic-recovery path"
        )));
    }
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::Domain(format!(
            "recovery dispersion k = {k} must be finite and exceed 1"
        )));
    }
    Ok((l * (k - 1.0), (1.0 - l) * (k - 1.0)))
}

/// Horizon value of `loan` at asset return `eps`. `r_borrower` is the
/// borrower's systematic weight, which enters the migration drift.
pub fn value_at_horizon(loan: &Loan, r_borrower: f64, eps: f64, cfg: &ModelConfig) -> Result<f64> {
    if !eps.is_finite() {
        return Err(Error::Domain(format!("asset return {eps} not finite")));
    }
    Ok(ValueFn::new(loan, r_borrower, cfg)?.eval(eps))
}

/// Mean, Hermite coefficients up to `cfg.n_max`, and standalone variance of
/// one loan's value function.
pub fn hermite_coeffs(
    loan: &Loan,
    loadings: &FactorLoadings,
    cfg: &ModelConfig,
) -> Result<HermiteCoefficients> {
    loan.validate(cfg.horizon_years)?;
    let vf = ValueFn::new(loan, loadings.r, cfg)?;
    let n_max = cfg.n_max;

    let theta = vf.threshold;
    let p_def = norm_cdf(theta);
    let pdf_theta = norm_pdf(theta);
    // He_0 .. He_{n_max-1} at the default boundary feed the closed-form
    // tail of every order.
    let mut he_theta = vec![0.0; n_max];
    hermite_he_all(theta, &mut he_theta);

    let mut sqrt_fact = vec![1.0f64; n_max + 1];
    for n in 1..=n_max {
        sqrt_fact[n] = sqrt_fact[n - 1] * (n as f64).sqrt();
    }

    // raw[n-1] accumulates E[v He_n] before the 1/sqrt(n!) normalization.
    let mut raw = vec![0.0f64; n_max];
    let mean;
    let variance_eps;

    match vf.migration {
        None => {
            // Two-valued payoff: everything is closed-form and the variance
            // is the exact Bernoulli expression.
            mean = vf.v_default * p_def + vf.v_base * (1.0 - p_def);
            let jump = vf.v_base - vf.v_default;
            for n in 1..=n_max {
                raw[n - 1] = jump * he_theta[n - 1] * pdf_theta;
            }
            let dd = vf.v_default - mean;
            let ds = vf.v_base - mean;
            variance_eps = dd * dd * p_def + ds * ds * (1.0 - p_def);
        }
        Some(_) => {
            let integrator = cfg.integrator()?;
            let hi = integrator.cutoff().max(theta);
            let splits = vf.splits();
            let grid = integrator.nodes_on(theta, hi, &splits);
            let mut vals = Vec::with_capacity(grid.len());
            for (x, w) in grid {
                let v = vf.survive_value(x);
                if !v.is_finite() {
                    return Err(Error::Numerical(format!(
                        "loan {}: non-finite value at eps = {x}",
                        loan.loan_id
                    )));
                }
                vals.push((x, w, v));
            }
            let v_hi = vf.survive_value(hi);
            let tail_mass = norm_sf(hi);
            let mut he_hi = vec![0.0; n_max];
            hermite_he_all(hi, &mut he_hi);

            let survive_mean: f64 = vals.iter().map(|&(_, w, v)| w * v).sum();
            mean = vf.v_default * p_def + survive_mean + v_hi * tail_mass;

            let mut he_x = vec![0.0; n_max + 1];
            for &(x, w, v) in &vals {
                hermite_he_all(x, &mut he_x);
                for n in 1..=n_max {
                    raw[n - 1] += w * v * he_x[n];
                }
            }
            for n in 1..=n_max {
                // default region lower tail + settled migration upper tail
                raw[n - 1] += vf.v_default * hermite_lower_tail(he_theta[n - 1], theta)
                    + v_hi * hermite_upper_tail(he_hi[n - 1], hi);
            }

            let dd = vf.v_default - mean;
            let dh = v_hi - mean;
            let mut var = dd * dd * p_def + dh * dh * tail_mass;
            for &(_, w, v) in &vals {
                var += w * (v - mean) * (v - mean);
            }
            variance_eps = var;
        }
    }

    let coeffs: Vec<f64> = (1..=n_max).map(|n| raw[n - 1] / sqrt_fact[n]).collect();
    let recovery_var = if cfg.recovery_k.is_finite() {
        loan.pd_horizon * loan.lgd * (1.0 - loan.lgd) / cfg.recovery_k * vf.v_base * vf.v_base
    } else {
        0.0
    };
    Ok(HermiteCoefficients {
        loan_id: loan.loan_id.clone(),
        mean,
        coeffs,
        variance_eps,
        standalone_variance: variance_eps + recovery_var,
    })
}
