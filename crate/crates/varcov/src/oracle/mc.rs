//! Seeded Monte Carlo simulator with stochastic recoveries.
//!
//! Scenarios are processed in fixed-size blocks. Block `b` draws from its
//! own counter-derived stream, blocks are reduced in index order through
//! compensated sums, and nothing else touches the generator, so a run is
//! bit-identical for a given (seed, n_scenarios, block_size) regardless of
//! how many threads execute the blocks.
//!
//! Draw order within a scenario: one uniform per factor, then per borrower
//! (in borrower order) one uniform for the idiosyncratic normal and one for
//! the recovery quantile. Every variable is always drawn, whether or not
//! the scenario uses it, so a loan's valuation never depends on another
//! loan's branch. Normals come from the inverse CDF; a borrower's recovery
//! uniform is shared by all of its loans and mapped through each loan's own
//! Beta inverse CDF, making recoveries comonotone within a borrower.
//!
//! When a borrower's loans share one loss mean (every generated portfolio
//! does this) the comonotone coupling carries covariance
//! `sqrt(var_i var_j)`, the exact value the analytic and quadrature paths
//! book for the recovery cross term. With unequal loss means the coupling
//! sits strictly below that bound, so simulated same-borrower covariances
//! converge a little under the closed-form ones.
//!
//! All estimator sums run on values centered by the analytic means, which
//! keeps `E[v_i v_p] - mu_i mu_p` cancellation out of the covariances; the
//! estimates themselves are algebraically unchanged.

use rayon::prelude::*;

use crate::accum::KahanSum;
use crate::allocator::{compute_coefficients, AllocationReport, Diagnostics, LoanAllocation};
use crate::error::{Error, Result};
use crate::math::beta::beta_inv_cdf;
use crate::math::normal::norm_inv_cdf_unchecked;
use crate::portfolio::Portfolio;
use crate::rng::{next_open01, stream_rng};
use crate::valuation::{beta_recovery_params, ModelConfig, ValueFn};

/// Simulation settings.
#[derive(Clone, Debug)]
pub struct McConfig {
    pub n_scenarios: usize,
    pub seed: u64,
    /// Scenarios per reduction block; also the parallel work unit.
    pub block_size: usize,
    /// Mirror every odd scenario's uniforms within a block (u -> 1 - u).
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_scenarios: 100_000,
            seed: 42,
            block_size: 16_384,
            antithetic: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenarios == 0 {
            return Err(Error::Validation("n_scenarios must be at least 1".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Validation("block_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sampling-error summary attached to a simulation.
#[derive(Clone, Debug)]
pub struct McStats {
    pub n_scenarios: usize,
    pub n_blocks: usize,
    /// Delete-one-block jackknife standard error of sigma_p.
    pub sigma_p_se: f64,
    /// Delete-one-block jackknife standard error of each sigma_c.
    pub sigma_c_se: Vec<f64>,
}

/// One rung of a convergence ladder.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n_scenarios: usize,
    /// Standard deviation across loans of (sigma_c_mc - sigma_c_ref) / sigma_c_ref.
    pub sigma_rel_diff: f64,
    /// sigma_rel_diff * sqrt(n_scenarios); flat under pure sampling error.
    pub sigma_times_sqrt_n: f64,
}

// Per-loan precomputation shared by every scenario.
struct LoanPrep {
    threshold: f64,
    face: f64,
    lgd: f64,
    // Beta(a, b) recovery parameters; None keeps the loss deterministic
    beta_ab: Option<(f64, f64)>,
    vf: ValueFn,
    mean: f64,
}

// Per-borrower precomputation.
struct BorrowerPrep {
    r: f64,
    idio: f64,
    beta: Vec<f64>,
}

struct BlockSums {
    n: usize,
    // centered per-loan sums, squares, and cross products with the
    // centered portfolio value
    s: Vec<f64>,
    q: Vec<f64>,
    c: Vec<f64>,
    sp: f64,
    qp: f64,
}

fn run_block(
    prep_l: &[LoanPrep],
    prep_b: &[BorrowerPrep],
    borrower_loans: &[Vec<usize>],
    n_factors: usize,
    mc: &McConfig,
    block_idx: usize,
    lo: usize,
    hi: usize,
) -> Result<BlockSums> {
    let n_loans = prep_l.len();
    let n_borrowers = prep_b.len();
    let mut rng = stream_rng(mc.seed, block_idx as u64);
    let n_uniform = n_factors + 2 * n_borrowers;
    let mut u = vec![0.0f64; n_uniform];
    let mut eta = vec![0.0f64; n_factors];
    let mut vals = vec![0.0f64; n_loans];
    let mut out = BlockSums {
        n: hi - lo,
        s: vec![0.0; n_loans],
        q: vec![0.0; n_loans],
        c: vec![0.0; n_loans],
        sp: 0.0,
        qp: 0.0,
    };
    for k in 0..(hi - lo) {
        if mc.antithetic && k % 2 == 1 {
            for x in u.iter_mut() {
                *x = 1.0 - *x;
            }
        } else {
            for x in u.iter_mut() {
                *x = next_open01(&mut rng);
            }
        }
        for (f, e) in eta.iter_mut().enumerate() {
            *e = norm_inv_cdf_unchecked(u[f]);
        }
        let mut pos = n_factors;
        for bi in 0..n_borrowers {
            let pb = &prep_b[bi];
            let xi = norm_inv_cdf_unchecked(u[pos]);
            let u_rec = u[pos + 1];
            pos += 2;
            let mut sys = 0.0;
            for (f, &bf) in pb.beta.iter().enumerate() {
                sys += bf * eta[f];
            }
            let eps = pb.r * sys + pb.idio * xi;
            for &li in &borrower_loans[bi] {
                let lp = &prep_l[li];
                let v = if eps <= lp.threshold {
                    let loss = match lp.beta_ab {
                        Some((a, b)) => beta_inv_cdf(a, b, u_rec)?,
                        None => lp.lgd,
                    };
                    lp.face * (1.0 - loss)
                } else {
                    lp.vf.survive_value(eps)
                };
                vals[li] = v - lp.mean;
            }
        }
        let mut vp = 0.0;
        for &v in &vals {
            vp += v;
        }
        for li in 0..n_loans {
            let v = vals[li];
            out.s[li] += v;
            out.q[li] += v * v;
            out.c[li] += v * vp;
        }
        out.sp += vp;
        out.qp += vp * vp;
    }
    Ok(out)
}

// Point estimates from a set of totals: (sigma_p, per-loan sigma_c).
fn estimates(n: f64, s: &[f64], c: &[f64], sp: f64, qp: f64) -> (f64, Vec<f64>) {
    let var_p = ((qp - sp * sp / n) / n).max(0.0);
    let sigma_p = var_p.sqrt();
    let sigma_c = s
        .iter()
        .zip(c)
        .map(|(&si, &ci)| {
            if sigma_p > 0.0 {
                (ci - si * sp / n) / n / sigma_p
            } else {
                0.0
            }
        })
        .collect();
    (sigma_p, sigma_c)
}

/// Simulate the portfolio value distribution and estimate every loan's
/// Euler contribution, with delete-one-block jackknife standard errors.
pub fn mc_simulate(
    portfolio: &Portfolio,
    cfg: &ModelConfig,
    mc: &McConfig,
) -> Result<(AllocationReport, McStats)> {
    cfg.validate()?;
    mc.validate()?;
    let coeffs = compute_coefficients(portfolio, cfg)?;
    let n_loans = portfolio.n_loans();

    let prep_l: Vec<LoanPrep> = (0..n_loans)
        .map(|li| -> Result<LoanPrep> {
            let loan = &portfolio.loans()[li];
            let r = portfolio.loadings_of(li).r;
            let vf = ValueFn::new(loan, r, cfg)?;
            let beta_ab = if cfg.recovery_k.is_finite() && loan.lgd > 0.0 && loan.lgd < 1.0 {
                Some(beta_recovery_params(loan.lgd, cfg.recovery_k)?)
            } else {
                None
            };
            Ok(LoanPrep {
                threshold: vf.threshold,
                face: vf.discounted_face(),
                lgd: loan.lgd,
                beta_ab,
                mean: coeffs[li].mean,
                vf,
            })
        })
        .collect::<Result<_>>()?;
    let prep_b: Vec<BorrowerPrep> = portfolio
        .borrowers()
        .iter()
        .map(|b| BorrowerPrep {
            r: b.loadings.r,
            idio: (1.0 - b.loadings.r * b.loadings.r).max(0.0).sqrt(),
            beta: b.loadings.beta.clone(),
        })
        .collect();
    let borrower_loans: Vec<Vec<usize>> = (0..portfolio.n_borrowers())
        .map(|bi| portfolio.loans_of(bi).to_vec())
        .collect();

    let n = mc.n_scenarios;
    let n_blocks = n.div_ceil(mc.block_size);
    let blocks: Vec<BlockSums> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * mc.block_size;
            let hi = ((b + 1) * mc.block_size).min(n);
            run_block(
                &prep_l,
                &prep_b,
                &borrower_loans,
                portfolio.n_factors(),
                mc,
                b,
                lo,
                hi,
            )
        })
        .collect::<Result<_>>()?;

    // block-ordered compensated totals
    let mut s_tot = vec![KahanSum::new(); n_loans];
    let mut q_tot = vec![KahanSum::new(); n_loans];
    let mut c_tot = vec![KahanSum::new(); n_loans];
    let mut sp_tot = KahanSum::new();
    let mut qp_tot = KahanSum::new();
    for blk in &blocks {
        for li in 0..n_loans {
            s_tot[li].add(blk.s[li]);
            q_tot[li].add(blk.q[li]);
            c_tot[li].add(blk.c[li]);
        }
        sp_tot.add(blk.sp);
        qp_tot.add(blk.qp);
    }
    let s: Vec<f64> = s_tot.iter().map(|k| k.value()).collect();
    let q: Vec<f64> = q_tot.iter().map(|k| k.value()).collect();
    let c: Vec<f64> = c_tot.iter().map(|k| k.value()).collect();
    let sp = sp_tot.value();
    let qp = qp_tot.value();

    let nf = n as f64;
    let (sigma_p, sigma_c) = estimates(nf, &s, &c, sp, qp);

    // delete-one-block jackknife on the ratio estimators
    let (sigma_p_se, sigma_c_se) = if n_blocks >= 2 {
        let mut del_p = Vec::with_capacity(n_blocks);
        let mut del_c = vec![Vec::with_capacity(n_blocks); n_loans];
        let mut s_d = vec![0.0f64; n_loans];
        let mut c_d = vec![0.0f64; n_loans];
        for blk in &blocks {
            let nd = nf - blk.n as f64;
            for li in 0..n_loans {
                s_d[li] = s[li] - blk.s[li];
                c_d[li] = c[li] - blk.c[li];
            }
            let (p_d, cs_d) = estimates(nd, &s_d, &c_d, sp - blk.sp, qp - blk.qp);
            del_p.push(p_d);
            for (li, v) in cs_d.into_iter().enumerate() {
                del_c[li].push(v);
            }
        }
        let jack_se = |xs: &[f64]| -> f64 {
            let b = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / b;
            let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            ((b - 1.0) / b * ss).sqrt()
        };
        (
            jack_se(&del_p),
            del_c.iter().map(|xs| jack_se(xs)).collect(),
        )
    } else {
        (f64::INFINITY, vec![f64::INFINITY; n_loans])
    };

    let loans = (0..n_loans)
        .map(|li| LoanAllocation {
            loan_id: portfolio.loans()[li].loan_id.clone(),
            sigma_i: ((q[li] - s[li] * s[li] / nf) / nf).max(0.0).sqrt(),
            sigma_c: sigma_c[li],
            capital_charge: None,
        })
        .collect::<Vec<_>>();
    let negative = loans
        .iter()
        .filter(|l| l.sigma_c < 0.0)
        .map(|l| l.loan_id.clone())
        .collect();
    Ok((
        AllocationReport {
            sigma_p,
            loans,
            diagnostics: Diagnostics {
                n_max: cfg.n_max,
                negative_contributions: negative,
            },
        },
        McStats {
            n_scenarios: n,
            n_blocks,
            sigma_p_se,
            sigma_c_se,
        },
    ))
}

/// Run the simulator across a scenario ladder and compare each rung to a
/// reference allocation. Each rung draws from an independent stream family,
/// so rungs are statistically independent of each other.
pub fn convergence_study(
    portfolio: &Portfolio,
    cfg: &ModelConfig,
    mc: &McConfig,
    ladder: &[usize],
    reference: &AllocationReport,
) -> Result<Vec<ConvergenceRow>> {
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "scenario ladder must be strictly increasing".into(),
        ));
    }
    if reference.loans.len() != portfolio.n_loans() {
        return Err(Error::Dimension(format!(
            "reference report covers {} loans, portfolio has {}",
            reference.loans.len(),
            portfolio.n_loans()
        )));
    }
    let mut rows = Vec::with_capacity(ladder.len());
    for (idx, &n) in ladder.iter().enumerate() {
        let rung = McConfig {
            n_scenarios: n,
            seed: mc
                .seed
                .wrapping_add((idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..mc.clone()
        };
        let (report, _) = mc_simulate(portfolio, cfg, &rung)?;
        let rel: Vec<f64> = report
            .loans
            .iter()
            .zip(&reference.loans)
            .map(|(m, r)| (m.sigma_c - r.sigma_c) / r.sigma_c)
            .collect();
        let mean = rel.iter().sum::<f64>() / rel.len() as f64;
        let var = rel.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / rel.len() as f64;
        let sigma = var.sqrt();
        if !sigma.is_finite() {
            return Err(Error::Numerical(
                "non-finite spread in the convergence study; a reference \
                 contribution is likely zero"
                    .into(),
            ));
        }
        rows.push(ConvergenceRow {
            n_scenarios: n,
            sigma_rel_diff: sigma,
            sigma_times_sqrt_n: sigma * (n as f64).sqrt(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{Borrower, FactorLoadings};
    use crate::oracle::brute_force_contributions;
    use crate::valuation::Loan;

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

    fn small_portfolio() -> Portfolio {
        let borrowers = vec![
            Borrower::new("B1", FactorLoadings::new(0.55, vec![1.0, 0.0]).unwrap()),
            Borrower::new("B2", FactorLoadings::new(0.40, vec![0.6, 0.8]).unwrap()),
            Borrower::new("B3", FactorLoadings::new(0.25, vec![0.0, 1.0]).unwrap()),
        ];
        let loans = vec![
            loan("L1", "B1", 0.06, 0.45, 3.0),
            loan("L2", "B1", 0.06, 0.70, 0.5),
            loan("L3", "B2", 0.15, 0.60, 5.0),
            loan("L4", "B3", 0.02, 0.35, 1.0),
        ];
        Portfolio::new(2, borrowers, loans, 1.0).unwrap()
    }

    #[test]
    fn same_seed_same_bits() {
        let p = small_portfolio();
        let cfg = ModelConfig::default();
        let mc = McConfig {
            n_scenarios: 20_000,
            seed: 7,
            block_size: 4096,
            antithetic: false,
        };
        let (a, sa) = mc_simulate(&p, &cfg, &mc).unwrap();
        let (b, sb) = mc_simulate(&p, &cfg, &mc).unwrap();
        assert_eq!(a.sigma_p.to_bits(), b.sigma_p.to_bits());
        for (x, y) in a.loans.iter().zip(&b.loans) {
            assert_eq!(x.sigma_c.to_bits(), y.sigma_c.to_bits());
            assert_eq!(x.sigma_i.to_bits(), y.sigma_i.to_bits());
        }
        assert_eq!(sa.sigma_p_se.to_bits(), sb.sigma_p_se.to_bits());
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let p = small_portfolio();
        let cfg = ModelConfig::default();
        let mc = McConfig {
            n_scenarios: 30_000,
            seed: 99,
            block_size: 2048,
            antithetic: true,
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let (a, _) = pool1.install(|| mc_simulate(&p, &cfg, &mc)).unwrap();
        let (b, _) = pool3.install(|| mc_simulate(&p, &cfg, &mc)).unwrap();
        assert_eq!(a.sigma_p.to_bits(), b.sigma_p.to_bits());
        for (x, y) in a.loans.iter().zip(&b.loans) {
            assert_eq!(x.sigma_c.to_bits(), y.sigma_c.to_bits());
        }
    }

    #[test]
    fn riskless_portfolio_has_zero_contributions() {
        let borrowers = vec![Borrower::new(
            "B1",
            FactorLoadings::new(0.5, vec![1.0]).unwrap(),
        )];
        let loans = vec![
            loan("L1", "B1", 0.2, 0.0, 1.0),
            loan("L2", "B1", 0.4, 0.0, 1.0),
        ];
        let p = Portfolio::new(1, borrowers, loans, 1.0).unwrap();
        let cfg = ModelConfig {
            risk_free_rate: 0.0,
            ..ModelConfig::default()
        };
        let mc = McConfig {
            n_scenarios: 5000,
            ..McConfig::default()
        };
        let (report, _) = mc_simulate(&p, &cfg, &mc).unwrap();
        assert_eq!(report.sigma_p, 0.0);
        for l in &report.loans {
            assert_eq!(l.sigma_c, 0.0);
            assert!(l.sigma_c.is_finite());
            assert_eq!(l.sigma_i, 0.0);
        }
    }

    #[test]
    fn contributions_add_up_to_sigma_p() {
        let p = small_portfolio();
        let cfg = ModelConfig::default();
        let mc = McConfig {
            n_scenarios: 50_000,
            seed: 3,
            ..McConfig::default()
        };
        let (report, _) = mc_simulate(&p, &cfg, &mc).unwrap();
        let sum: f64 = report.loans.iter().map(|l| l.sigma_c).sum();
        assert!(
            (sum - report.sigma_p).abs() < 1e-10 * report.sigma_p,
            "{sum} vs {}",
            report.sigma_p
        );
    }

    #[test]
    fn estimates_bracket_the_quadrature_oracle() {
        let p = small_portfolio();
        let cfg = ModelConfig {
            n_max: 12,
            ..ModelConfig::default()
        };
        let brute = brute_force_contributions(&p, &cfg).unwrap();
        let mc = McConfig {
            n_scenarios: 200_000,
            seed: 2024,
            ..McConfig::default()
        };
        let (report, stats) = mc_simulate(&p, &cfg, &mc).unwrap();
        assert!((report.sigma_p - brute.sigma_p).abs() < 4.0 * stats.sigma_p_se);
        for ((m, b), se) in report.loans.iter().zip(&brute.loans).zip(&stats.sigma_c_se) {
            assert!(
                (m.sigma_c - b.sigma_c).abs() < 4.0 * se,
                "{}: mc {} brute {} se {}",
                m.loan_id,
                m.sigma_c,
                b.sigma_c,
                se
            );
        }
    }

    #[test]
    fn antithetic_agrees_within_errors() {
        let p = small_portfolio();
        let cfg = ModelConfig::default();
        let plain = McConfig {
            n_scenarios: 120_000,
            seed: 11,
            antithetic: false,
            ..McConfig::default()
        };
        let anti = McConfig {
            antithetic: true,
            ..plain.clone()
        };
        let (rp, sp) = mc_simulate(&p, &cfg, &plain).unwrap();
        let (ra, sa) = mc_simulate(&p, &cfg, &anti).unwrap();
        for (((x, y), se_x), se_y) in rp
            .loans
            .iter()
            .zip(&ra.loans)
            .zip(&sp.sigma_c_se)
            .zip(&sa.sigma_c_se)
        {
            let combined = (se_x * se_x + se_y * se_y).sqrt();
            assert!(
                (x.sigma_c - y.sigma_c).abs() < 6.0 * combined,
                "{}: {} vs {}",
                x.loan_id,
                x.sigma_c,
                y.sigma_c
            );
        }
    }

    #[test]
    fn convergence_ladder_shapes() {
        let p = small_portfolio();
        let cfg = ModelConfig {
            n_max: 12,
            ..ModelConfig::default()
        };
        let brute = brute_force_contributions(&p, &cfg).unwrap();
        let mc = McConfig {
            seed: 5,
            block_size: 4096,
            ..McConfig::default()
        };
        let rows = convergence_study(&p, &cfg, &mc, &[5_000, 20_000, 80_000], &brute).unwrap();
        assert_eq!(rows.len(), 3);
        for w in rows.windows(2) {
            assert!(w[1].n_scenarios > w[0].n_scenarios);
        }
        // sampling error shrinks down the ladder; with only four loans the
        // cross-loan spread is itself noisy, so the sqrt(N) product gets a
        // coarse band only (the tight flatness check runs at 50-loan scale)
        assert!(rows[2].sigma_rel_diff < 0.6 * rows[0].sigma_rel_diff);
        for r in &rows {
            assert!(r.sigma_rel_diff > 0.0 && r.sigma_rel_diff.is_finite());
        }
        let lo = rows
            .iter()
            .map(|r| r.sigma_times_sqrt_n)
            .fold(f64::MAX, f64::min);
        let hi = rows
            .iter()
            .map(|r| r.sigma_times_sqrt_n)
            .fold(f64::MIN, f64::max);
        assert!(hi / lo < 25.0, "sigma sqrt(N) spread {lo}..{hi}");
        assert!(convergence_study(&p, &cfg, &mc, &[], &brute)
            .unwrap()
            .is_empty());
        assert!(convergence_study(&p, &cfg, &mc, &[100, 100], &brute).is_err());
    }
}
