//! Quadratic-cost reference allocation. Every distinct-borrower pair is
//! integrated directly over its bivariate normal asset returns, with no
//! series expansion anywhere, so the result is an independent check on the
//! tensor path at O(N^2) cost.
//!
//! The pair integral is evaluated in conditional form. With
//! `eps_j = rho x + s z`, `s = sqrt(1 - rho^2)`:
//!
//! `cov = int n(x) (v_i(x) - mu_i) [ int (v_j(rho x + s z) - mu_j) n(z) dz ] dx`
//!
//! The inner integral is shared across outer nodes by substituting
//! `y = rho x + s z`: loan j's centered values are tabulated once on a fixed
//! y-grid carrying loan j's panel splits, and each outer node only reweights
//! that table by the conditional density `n((y - rho x)/s)/s`. Both
//! integrands are centered before multiplication so the product never
//! suffers the `E[v_i v_j] - mu_i mu_j` cancellation.

use rayon::prelude::*;

use crate::accum::KahanSum;
use crate::allocator::{assemble_report, compute_coefficients, AllocationReport};
use crate::error::{Error, Result};
use crate::factor::{asset_correlation, FactorLoadings};
use crate::math::normal::{norm_pdf, norm_sf};
use crate::math::quadrature::{NormalIntegrator, Split};
use crate::portfolio::Portfolio;
use crate::valuation::{hermite_coeffs, Loan, ModelConfig, ValueFn};

/// Hard cap on the loan count accepted by the quadratic oracle.
pub const BRUTE_FORCE_MAX_LOANS: usize = 2000;

// Below this correlation the conditional density is wide enough to smooth
// loan j's kinks away; above it the kinks survive into the outer integrand
// at x = y*/rho and the outer grid must split there.
const MAP_SPLITS_ABOVE: f64 = 0.4;

// Beyond this the shared y-grid would need panels finer than the floor to
// resolve the conditional density; fall back to a fresh z-grid per outer
// node, which stays exact for any correlation.
const TEMPLATE_RHO_LIMIT: f64 = 0.999;

/// Covariance of two loans' horizon values under asset correlation `rho`,
/// by direct quadrature. Distinct borrowers only: the loss-uncertainty
/// coupling of shared-borrower loans is not included here.
pub fn pairwise_covariance(
    loan_i: &Loan,
    loadings_i: &FactorLoadings,
    loan_j: &Loan,
    loadings_j: &FactorLoadings,
    rho: f64,
    cfg: &ModelConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(rho.is_finite() && rho.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "asset correlation {rho} outside [-1, 1]"
        )));
    }
    let ci = hermite_coeffs(loan_i, loadings_i, cfg)?;
    let cj = hermite_coeffs(loan_j, loadings_j, cfg)?;
    let vf_i = ValueFn::new(loan_i, loadings_i.r, cfg)?;
    let vf_j = ValueFn::new(loan_j, loadings_j.r, cfg)?;
    let integ = cfg.integrator()?;
    cross_cov(&vf_i, ci.mean, &vf_j, cj.mean, rho, &integ)
}

fn cross_cov(
    vf_i: &ValueFn,
    mean_i: f64,
    vf_j: &ValueFn,
    mean_j: f64,
    rho: f64,
    integ: &NormalIntegrator,
) -> Result<f64> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    if rho.abs() >= 1.0 {
        return comonotone_cov(vf_i, mean_i, vf_j, mean_j, rho.signum(), integ);
    }
    if rho.abs() > TEMPLATE_RHO_LIMIT {
        return conditional_cov(vf_i, mean_i, vf_j, mean_j, rho, integ);
    }
    template_cov(vf_i, mean_i, vf_j, mean_j, rho, integ)
}

// |rho| = 1: both values are functions of one normal variable.
fn comonotone_cov(
    vf_i: &ValueFn,
    mean_i: f64,
    vf_j: &ValueFn,
    mean_j: f64,
    sign: f64,
    integ: &NormalIntegrator,
) -> Result<f64> {
    let mut splits = vf_i.splits();
    for sp in vf_j.splits() {
        splits.push(Split {
            at: sign * sp.at,
            scale: sp.scale,
        });
    }
    integ.integrate(
        |x| (vf_i.eval(x) - mean_i) * (vf_j.eval(sign * x) - mean_j),
        &splits,
    )
}

// Fallback for near-unit correlation: a fresh conditional grid per outer
// node, splits mapped into z-coordinates exactly.
fn conditional_cov(
    vf_i: &ValueFn,
    mean_i: f64,
    vf_j: &ValueFn,
    mean_j: f64,
    rho: f64,
    integ: &NormalIntegrator,
) -> Result<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let t = integ.cutoff();
    let splits_j = vf_j.splits();
    let inner_at = |x: f64| -> Result<f64> {
        let zs: Vec<Split> = splits_j
            .iter()
            .map(|sp| Split {
                at: (sp.at - rho * x) / s,
                scale: sp.scale.map(|sc| sc / s),
            })
            .collect();
        integ.integrate(|z| vf_j.eval(rho * x + s * z) - mean_j, &zs)
    };
    let mut splits = vf_i.splits();
    for sp in &splits_j {
        splits.push(Split {
            at: sp.at / rho,
            scale: Some(sp.scale.unwrap_or(0.0).max(s) / rho.abs()),
        });
    }
    let mut acc = 0.0;
    for (x, w) in integ.nodes_on(-t, t, &splits) {
        acc += w * (vf_i.eval(x) - mean_i) * inner_at(x)?;
    }
    let tail = norm_sf(t);
    acc +=
        tail * ((vf_i.eval(-t) - mean_i) * inner_at(-t)? + (vf_i.eval(t) - mean_i) * inner_at(t)?);
    if !acc.is_finite() {
        return Err(Error::Numerical(format!(
            "pair covariance came out {acc} at rho = {rho}"
        )));
    }
    Ok(acc)
}

// Main path: shared y-grid template for the inner integral.
fn template_cov(
    vf_i: &ValueFn,
    mean_i: f64,
    vf_j: &ValueFn,
    mean_j: f64,
    rho: f64,
    integ: &NormalIntegrator,
) -> Result<f64> {
    let t = integ.cutoff();
    let s = (1.0 - rho * rho).sqrt();
    let inv_s = 1.0 / s;

    // y-grid over the union of all conditional windows [rho x - s t,
    // rho x + s t], |x| <= t, with panels fine enough for the conditional
    // density of width s
    let pw_y = integ.panel_width() * (2.0 * s).min(1.0);
    let inner = NormalIntegrator::new(integ.nodes_per_panel(), pw_y, t)?;
    let splits_j = vf_j.splits();
    let r_y = t * (rho.abs() + s);
    let grid = inner.raw_nodes_on(-r_y, r_y, &splits_j);
    let mut ys = Vec::with_capacity(grid.len());
    let mut pv = Vec::with_capacity(grid.len());
    for (y, w) in grid {
        let v = vf_j.eval(y) - mean_j;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite loan value at {y}")));
        }
        ys.push(y);
        pv.push(w * v);
    }

    let tail_z = norm_sf(t);
    let inner_at = |x: f64| -> f64 {
        let c = rho * x;
        let mut acc = 0.0;
        for (y, p) in ys.iter().zip(&pv) {
            let u = (y - c) * inv_s;
            // conditional density below 1e-70: nothing left to add
            if u * u < 320.0 {
                acc += p * norm_pdf(u);
            }
        }
        // constant extension beyond the conditional window edges
        acc * inv_s + tail_z * ((vf_j.eval(c - s * t) - mean_j) + (vf_j.eval(c + s * t) - mean_j))
    };

    let mut splits = vf_i.splits();
    if rho.abs() > MAP_SPLITS_ABOVE {
        for sp in &splits_j {
            splits.push(Split {
                at: sp.at / rho,
                scale: Some(sp.scale.unwrap_or(0.0).max(s) / rho.abs()),
            });
        }
    }
    let mut acc = 0.0;
    for (x, w) in integ.nodes_on(-t, t, &splits) {
        acc += w * (vf_i.eval(x) - mean_i) * inner_at(x);
    }
    acc += norm_sf(t)
        * ((vf_i.eval(-t) - mean_i) * inner_at(-t) + (vf_i.eval(t) - mean_i) * inner_at(t));
    if !acc.is_finite() {
        return Err(Error::Numerical(format!(
            "pair covariance came out {acc} at rho = {rho}"
        )));
    }
    Ok(acc)
}

/// Series-free Euler allocation: every cross-borrower covariance by direct
/// pair quadrature, same-borrower blocks and recovery coupling through the
/// same shared-asset path the production allocator uses.
pub fn brute_force_contributions(
    portfolio: &Portfolio,
    cfg: &ModelConfig,
) -> Result<AllocationReport> {
    cfg.validate()?;
    let n = portfolio.n_loans();
    if n > BRUTE_FORCE_MAX_LOANS {
        return Err(Error::Capacity(format!(
            "{n} loans exceed the quadratic oracle guard of {BRUTE_FORCE_MAX_LOANS}"
        )));
    }
    let coeffs = compute_coefficients(portfolio, cfg)?;
    let integ = cfg.integrator()?;
    let vfs: Vec<ValueFn> = (0..n)
        .map(|li| ValueFn::new(&portfolio.loans()[li], portfolio.loadings_of(li).r, cfg))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if portfolio.borrower_of(i) == portfolio.borrower_of(j) {
                continue;
            }
            let rho = asset_correlation(portfolio.loadings_of(i), portfolio.loadings_of(j))?;
            if rho != 0.0 {
                pairs.push((i, j, rho));
            }
        }
    }
    let covs: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j, rho)| {
            cross_cov(
                &vfs[i],
                coeffs[i].mean,
                &vfs[j],
                coeffs[j].mean,
                rho,
                &integ,
            )
        })
        .collect::<Result<_>>()?;

    // fixed-order row folds keep the result independent of thread count
    let mut rows = vec![KahanSum::new(); n];
    for (&(i, j, _), &cov) in pairs.iter().zip(&covs) {
        rows[i].add(cov);
        rows[j].add(cov);
    }
    assemble_report(
        portfolio,
        &coeffs,
        cfg,
        rows.iter().map(|k| k.value()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::Borrower;
    use crate::math::normal::{bivariate_norm_cdf, norm_cdf};

    fn loan(id: &str, borrower: &str, pd: f64, lgd: f64, t_m: f64) -> Loan {
        Loan {
            loan_id: id.into(),
            borrower_id: borrower.into(),
            v0: 1.0,
            t_m,
            pd_horizon: pd,
            pd_maturity: pd,
            lgd,
        }
    }

    fn settled_cfg() -> ModelConfig {
        ModelConfig {
            risk_free_rate: 0.0,
            recovery_k: f64::INFINITY,
            ..ModelConfig::default()
        }
    }

    fn full(beta: f64) -> FactorLoadings {
        FactorLoadings::new(1.0, vec![beta]).unwrap()
    }

    #[test]
    fn independent_pair_is_exactly_zero() {
        let a = loan("L1", "B1", 0.3, 0.8, 1.0);
        let b = loan("L2", "B2", 0.1, 0.5, 1.0);
        let cov = pairwise_covariance(&a, &full(1.0), &b, &full(1.0), 0.0, &settled_cfg()).unwrap();
        assert_eq!(cov, 0.0);
    }

    #[test]
    fn default_only_pair_hits_the_orthant_closed_form() {
        // total-loss loans defaulting at the median with unit discounted
        // value: cov = Phi2(0, 0, 1/2) - 1/4 = asin(1/2)/(2 pi) = 1/12
        let a = loan("L1", "B1", 0.5, 1.0, 1.0);
        let b = loan("L2", "B2", 0.5, 1.0, 1.0);
        let cov = pairwise_covariance(&a, &full(1.0), &b, &full(1.0), 0.5, &settled_cfg()).unwrap();
        assert!((cov - 1.0 / 12.0).abs() < 1e-11, "cov = {cov}");
    }

    #[test]
    fn default_only_grid_matches_the_bivariate_normal() {
        // cov = l_i l_j (Phi2(-d_i, -d_j, rho) - p_i p_j) for pure default
        // loans with unit discounted face
        let cfg = settled_cfg();
        for &d_i in &[-2.0, 0.0, 1.0] {
            for &d_j in &[-1.0, 0.5, 2.0] {
                for &rho in &[0.1, 0.5, -0.3] {
                    let (p_i, p_j) = (norm_cdf(-d_i), norm_cdf(-d_j));
                    let a = loan("L1", "B1", p_i, 0.7, 1.0);
                    let b = loan("L2", "B2", p_j, 0.4, 1.0);
                    let want =
                        0.7 * 0.4 * (bivariate_norm_cdf(-d_i, -d_j, rho).unwrap() - p_i * p_j);
                    let got =
                        pairwise_covariance(&a, &full(1.0), &b, &full(1.0), rho, &cfg).unwrap();
                    assert!(
                        (got - want).abs() < 1e-9,
                        "d=({d_i},{d_j}) rho={rho}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn migration_pair_matches_the_series_partial_sum() {
        // 25 series terms at rho = 1/2 leave a geometric tail below 1e-8
        let cfg = ModelConfig {
            n_max: 25,
            ..ModelConfig::default()
        };
        let a = loan("L1", "B1", 0.10, 0.6, 3.0);
        let b = loan("L2", "B2", 0.04, 0.8, 5.0);
        let la = FactorLoadings::new(0.5, vec![1.0]).unwrap();
        let lb = FactorLoadings::new(0.7, vec![1.0]).unwrap();
        let ca = hermite_coeffs(&a, &la, &cfg).unwrap();
        let cb = hermite_coeffs(&b, &lb, &cfg).unwrap();
        let rho = 0.5f64;
        let partial: f64 = (1..=25)
            .map(|n| rho.powi(n as i32) * ca.v_n(n) * cb.v_n(n))
            .sum();
        let got = pairwise_covariance(&a, &la, &b, &lb, rho, &cfg).unwrap();
        assert!(
            (got - partial).abs() < 1e-8,
            "quadrature {got} vs partial sum {partial}"
        );
    }

    #[test]
    fn pair_covariance_is_symmetric() {
        let cfg = ModelConfig::default();
        let a = loan("L1", "B1", 0.02, 0.9, 7.0);
        let b = loan("L2", "B2", 0.25, 0.3, 0.4);
        let la = FactorLoadings::new(0.8, vec![1.0]).unwrap();
        let lb = FactorLoadings::new(0.35, vec![1.0]).unwrap();
        for &rho in &[0.15, -0.6, 0.85] {
            let ab = pairwise_covariance(&a, &la, &b, &lb, rho, &cfg).unwrap();
            let ba = pairwise_covariance(&b, &lb, &a, &la, rho, &cfg).unwrap();
            assert!(
                (ab - ba).abs() < 1e-11 * ab.abs().max(1e-6),
                "rho={rho}: {ab} vs {ba}"
            );
        }
    }

    #[test]
    fn unit_correlation_reduces_to_the_one_dimensional_moment() {
        let cfg = settled_cfg();
        let a = loan("L1", "B1", 0.15, 0.55, 4.0);
        let la = FactorLoadings::new(0.6, vec![1.0]).unwrap();
        let ca = hermite_coeffs(&a, &la, &cfg).unwrap();
        let same = pairwise_covariance(&a, &la, &a, &la, 1.0, &cfg).unwrap();
        assert!(
            (same - ca.variance_eps).abs() < 1e-12,
            "{same} vs {}",
            ca.variance_eps
        );
        // antithetic correlation on a symmetric-boundary loan: the centered
        // product integral flips the grid, value checked against itself
        let anti = pairwise_covariance(&a, &la, &a, &la, -1.0, &cfg).unwrap();
        let anti2 = pairwise_covariance(&a, &la, &a, &la, -1.0, &cfg).unwrap();
        assert_eq!(anti, anti2);
        assert!(anti < same);
    }

    #[test]
    fn near_unit_correlation_falls_back_without_blowing_up() {
        let cfg = settled_cfg();
        let a = loan("L1", "B1", 0.2, 0.7, 1.0);
        let b = loan("L2", "B2", 0.3, 0.5, 1.0);
        let hi = pairwise_covariance(&a, &full(1.0), &b, &full(1.0), 0.9995, &cfg).unwrap();
        let unit = pairwise_covariance(&a, &full(1.0), &b, &full(1.0), 1.0, &cfg).unwrap();
        // continuity into the comonotone limit
        assert!((hi - unit).abs() < 5e-3 * unit.abs());
        // and against the closed form at that rho
        let d_i = crate::valuation::distance_to_default(0.2).unwrap();
        let d_j = crate::valuation::distance_to_default(0.3).unwrap();
        let want = 0.7 * 0.5 * (bivariate_norm_cdf(-d_i, -d_j, 0.9995).unwrap() - 0.2 * 0.3);
        assert!((hi - want).abs() < 1e-8, "{hi} vs {want}");
    }

    #[test]
    fn single_loan_contribution_is_its_standalone_risk() {
        let borrowers = vec![Borrower::new(
            "B1",
            FactorLoadings::new(0.5, vec![1.0]).unwrap(),
        )];
        let loans = vec![loan("L1", "B1", 0.08, 0.45, 2.0)];
        let p = Portfolio::new(1, borrowers, loans, 1.0).unwrap();
        let cfg = ModelConfig::default();
        let report = brute_force_contributions(&p, &cfg).unwrap();
        let l = &report.loans[0];
        assert!((report.sigma_p - l.sigma_i).abs() < 1e-14 * l.sigma_i);
        assert!((l.sigma_c - l.sigma_i).abs() < 1e-14 * l.sigma_i);
    }

    #[test]
    fn independent_portfolio_splits_by_variance() {
        let borrowers: Vec<Borrower> = (0..4)
            .map(|i| {
                Borrower::new(
                    format!("B{i}"),
                    FactorLoadings::new(0.0, vec![0.0]).unwrap(),
                )
            })
            .collect();
        let loans: Vec<Loan> = (0..4)
            .map(|i| {
                loan(
                    &format!("L{i}"),
                    &format!("B{i}"),
                    0.05 + 0.08 * i as f64,
                    0.3 + 0.15 * i as f64,
                    0.5 + i as f64,
                )
            })
            .collect();
        let p = Portfolio::new(1, borrowers, loans, 1.0).unwrap();
        let report = brute_force_contributions(&p, &ModelConfig::default()).unwrap();
        let var_sum: f64 = report.loans.iter().map(|l| l.sigma_i * l.sigma_i).sum();
        assert!((report.sigma_p - var_sum.sqrt()).abs() < 1e-13);
        for l in &report.loans {
            let want = l.sigma_i * l.sigma_i / report.sigma_p;
            assert!((l.sigma_c - want).abs() < 1e-13, "{}", l.loan_id);
        }
    }

    #[test]
    fn loan_count_guard_trips() {
        let borrowers: Vec<Borrower> = (0..3)
            .map(|i| {
                Borrower::new(
                    format!("B{i}"),
                    FactorLoadings::new(0.4, vec![1.0]).unwrap(),
                )
            })
            .collect();
        let loans: Vec<Loan> = (0..2001)
            .map(|i| loan(&format!("L{i}"), &format!("B{}", i % 3), 0.1, 0.5, 1.0))
            .collect();
        let p = Portfolio::new(1, borrowers, loans, 1.0).unwrap();
        let err = brute_force_contributions(&p, &ModelConfig::default()).unwrap_err();
        assert!(err.to_string().contains("2000"));
    }

    #[test]
    fn allocator_converges_to_the_oracle() {
        // moderate correlations, deep series: the tensor path and the pair
        // quadrature must meet far inside the acceptance tolerance
        let borrowers = vec![
            Borrower::new("B1", FactorLoadings::new(0.45, vec![1.0, 0.0]).unwrap()),
            Borrower::new("B2", FactorLoadings::new(0.55, vec![0.6, 0.8]).unwrap()),
            Borrower::new("B3", FactorLoadings::new(0.30, vec![0.0, 1.0]).unwrap()),
            Borrower::new("B4", FactorLoadings::new(0.0, vec![0.0, 0.0]).unwrap()),
        ];
        let loans = vec![
            loan("L1", "B1", 0.04, 0.45, 3.0),
            loan("L2", "B1", 0.04, 0.60, 0.5),
            loan("L3", "B2", 0.12, 0.80, 6.0),
            loan("L4", "B2", 0.12, 0.35, 1.0),
            loan("L5", "B3", 0.006, 0.99, 10.0),
            loan("L6", "B4", 0.30, 0.50, 2.0),
        ];
        let p = Portfolio::new(2, borrowers, loans, 1.0).unwrap();
        let cfg = ModelConfig {
            n_max: 16,
            ..ModelConfig::default()
        };
        let analytic = crate::allocator::allocate(&p, &cfg).unwrap();
        let brute = brute_force_contributions(&p, &cfg).unwrap();
        assert!(
            (analytic.sigma_p - brute.sigma_p).abs() < 1e-7 * brute.sigma_p,
            "sigma_p {} vs {}",
            analytic.sigma_p,
            brute.sigma_p
        );
        for (a, b) in analytic.loans.iter().zip(&brute.loans) {
            let denom = b.sigma_c.abs().max(1e-3 * brute.sigma_p);
            assert!(
                (a.sigma_c - b.sigma_c).abs() < 1e-6 * denom,
                "{}: {} vs {}",
                a.loan_id,
                a.sigma_c,
                b.sigma_c
            );
        }
    }

    #[test]
    fn truncation_error_decays_geometrically() {
        // Six borrowers, identical r = sqrt(0.3) and beta: every pair sits
        // exactly at rho = 0.3, so the tail of the covariance series is a
        // clean geometric in rho and the oracle gap should shrink by very
        // roughly that factor per added order. Deeper truncation must never
        // be worse.
        let r = 0.3f64.sqrt();
        let borrowers: Vec<Borrower> = (1..=6)
            .map(|i| {
                Borrower::new(
                    format!("B{i}"),
                    FactorLoadings::new(r, vec![1.0, 0.0]).unwrap(),
                )
            })
            .collect();
        let loans = vec![
            loan("L1", "B1", 0.020, 0.45, 4.0),
            loan("L2", "B2", 0.150, 0.60, 1.0),
            loan("L3", "B3", 0.070, 0.80, 7.0),
            loan("L4", "B4", 0.004, 0.90, 2.0),
            loan("L5", "B5", 0.300, 0.35, 0.5),
            loan("L6", "B6", 0.045, 0.99, 12.0),
        ];
        let p = Portfolio::new(2, borrowers, loans, 1.0).unwrap();
        let oracle = brute_force_contributions(&p, &ModelConfig::default()).unwrap();

        let worst_gap = |n_max: usize| -> f64 {
            let cfg = ModelConfig {
                n_max,
                ..ModelConfig::default()
            };
            let series = crate::allocator::allocate(&p, &cfg).unwrap();
            series
                .loans
                .iter()
                .zip(&oracle.loans)
                .map(|(a, b)| {
                    ((a.sigma_c * series.sigma_p - b.sigma_c * oracle.sigma_p)
                        / (b.sigma_c * oracle.sigma_p))
                        .abs()
                })
                .fold(0.0f64, f64::max)
        };

        let gaps: Vec<f64> = (4..=8).map(worst_gap).collect();
        let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
        println!("worst gaps for n_max 4..8: {gaps:?}, step ratios: {ratios:?}");

        // Every added order shrinks the worst gap, and the mean shrink factor
        // tracks the 0.3 pairwise correlation. Individual steps swing around
        // that rate because consecutive coefficients of a two-point payoff
        // oscillate in size.
        for (i, r) in ratios.iter().enumerate() {
            assert!(
                *r < 0.6,
                "raising n_max from {} to {} shrank the worst gap by only {r:.3}",
                4 + i,
                5 + i
            );
        }
        let rate = ratios
            .iter()
            .product::<f64>()
            .powf(1.0 / ratios.len() as f64);
        assert!(
            (0.1..0.6).contains(&rate),
            "geometric-mean decay rate {rate:.3} outside [0.1, 0.6]: {ratios:?}"
        );
    }
}
