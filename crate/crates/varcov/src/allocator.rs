//! Linear-time Euler risk allocation.
//!
//! The covariance between two loans of distinct borrowers expands as
//! `cov(v_i, v_j) = sum_n rho_ij^n v_i^(n) v_j^(n)` in the asset
//! correlation `rho_ij = r_i r_j (beta_i . beta_j)`. Summing over the whole
//! portfolio per loan would be quadratic; instead each order accumulates a
//! symmetric factor tensor
//!
//! `P^(n)[k1..kn] = sum_i r_i^n v_i^(n) (beta_i)_{k1} ... (beta_i)_{kn}`
//!
//! in one pass, after which every loan's full cross-covariance sum is the
//! n-fold contraction of `P^(n)` with its own loadings:
//!
//! `sigma_p sigma_i^c = <v_i V_a> + sum_n r^n v_i^(n) contract(P^(n), beta_i)
//!                      - sum_n r^{2n} v_i^(n) V_a^(n)`
//!
//! where borrower `a`'s own loans enter exactly through the shared-asset
//! term `<v_i V_a>` (their series contribution is subtracted via the
//! coefficient sums `V_a^(n)`; the series does not converge for the
//! perfectly correlated loans of one borrower, so that block is integrated
//! directly). Tensors store only sorted multi-indices; the multinomial
//! multiplicity of each index pattern is applied during contraction, so an
//! order-n tensor over N_f factors holds C(N_f+n-1, n) entries.
//!
//! Determinism: coefficient computation parallelizes over loans, but all
//! cross-loan accumulation is sequential and compensated, so results are
//! bit-identical regardless of thread count.

use rayon::prelude::*;

use crate::accum::KahanSum;
use crate::error::{Error, Result};
use crate::factor::FactorLoadings;
use crate::math::normal::norm_sf;
use crate::portfolio::Portfolio;
use crate::valuation::{hermite_coeffs, HermiteCoefficients, ModelConfig, ValueFn};

/// Cap on total stored tensor entries across all orders.
pub const MAX_TENSOR_ENTRIES: usize = 20_000_000;

// Pascal's triangle with saturating entries. Saturated values are only ever
// produced for index ranges that the capacity budget has already ruled out.
struct BinomTable {
    cols: usize,
    c: Vec<usize>,
}

impl BinomTable {
    fn new(max_n: usize, max_k: usize) -> BinomTable {
        let cols = max_k + 1;
        let mut c = vec![0usize; (max_n + 1) * cols];
        for n in 0..=max_n {
            c[n * cols] = 1;
            for k in 1..=max_k.min(n) {
                c[n * cols + k] = c[(n - 1) * cols + k - 1].saturating_add(c[(n - 1) * cols + k]);
            }
        }
        BinomTable { cols, c }
    }

    #[inline]
    fn get(&self, n: usize, k: usize) -> usize {
        self.c[n * self.cols + k]
    }
}

// Number of sorted multi-indices of length n over f factors:
// C(f + n - 1, n), with None signalling overflow of the budget.
fn symmetric_entries(f: usize, n: usize, budget: u128) -> Option<u128> {
    let mut acc: u128 = 1;
    for t in 1..=n as u128 {
        acc = acc.checked_mul(f as u128 + n as u128 - t)?;
        acc /= t;
        if acc > budget.saturating_mul(64) {
            return None;
        }
    }
    Some(acc)
}

/// Symmetric moment tensors of orders 1..=n_max over the factor space.
pub struct TensorSet {
    n_factors: usize,
    n_max: usize,
    // tensors[n-1]: dense values over sorted multi-indices in rank order
    tensors: Vec<Vec<f64>>,
    binom: BinomTable,
    // factorials 0..=n_max for multinomial multiplicities
    fact: Vec<f64>,
}

impl TensorSet {
    /// Allocate zeroed tensors. Fails when the combined entry count would
    /// exceed `budget`.
    pub fn with_budget(n_factors: usize, n_max: usize, budget: usize) -> Result<TensorSet> {
        if n_factors == 0 || n_max == 0 {
            return Err(Error::Dimension(
                "tensor set needs n_factors >= 1 and n_max >= 1".into(),
            ));
        }
        let mut sizes = Vec::with_capacity(n_max);
        let mut total: u128 = 0;
        for n in 1..=n_max {
            let sz = symmetric_entries(n_factors, n, budget as u128).ok_or_else(|| {
                Error::Capacity(format!(
                    "order-{n} tensor over {n_factors} factors overflows the \
                     entry budget; lower n_max"
                ))
            })?;
            total += sz;
            if total > budget as u128 {
                return Err(Error::Capacity(format!(
                    "tensors for n_max = {n_max}, {n_factors} factors need {total} \
                     entries, budget is {budget}; lower n_max"
                )));
            }
            sizes.push(sz as usize);
        }
        let mut fact = vec![1.0f64; n_max + 1];
        for n in 1..=n_max {
            fact[n] = fact[n - 1] * n as f64;
        }
        Ok(TensorSet {
            n_factors,
            n_max,
            tensors: sizes.into_iter().map(|s| vec![0.0; s]).collect(),
            binom: BinomTable::new(n_factors + n_max, n_max),
            fact,
        })
    }

    pub fn new(n_factors: usize, n_max: usize) -> Result<TensorSet> {
        TensorSet::with_budget(n_factors, n_max, MAX_TENSOR_ENTRIES)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    /// Stored entry count at order `n`, the number of sorted multi-indices
    /// `C(n_factors + n - 1, n)`.
    pub fn order_len(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.n_max {
            return Err(Error::Dimension(format!(
                "order {n} outside 1..={}",
                self.n_max
            )));
        }
        Ok(self.tensors[n - 1].len())
    }

    // Rank of a sorted multi-index k1 <= ... <= kn within the dense layout:
    // sum_t C(k_t + t - 1, t) with t the 1-based position.
    fn rank(&self, sorted: &[usize]) -> usize {
        sorted
            .iter()
            .enumerate()
            .map(|(t0, &k)| self.binom.get(k + t0, t0 + 1))
            .sum()
    }

    /// Stored value at a multi-index (any order of indices).
    pub fn entry(&self, n: usize, indices: &[usize]) -> Result<f64> {
        if n == 0 || n > self.n_max || indices.len() != n {
            return Err(Error::Dimension(format!(
                "order-{n} entry lookup with {} indices (n_max = {})",
                indices.len(),
                self.n_max
            )));
        }
        if indices.iter().any(|&k| k >= self.n_factors) {
            return Err(Error::Dimension("factor index out of range".into()));
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        Ok(self.tensors[n - 1][self.rank(&sorted)])
    }

    #[cfg(test)]
    fn set_entry(&mut self, n: usize, indices: &[usize], value: f64) {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        let r = self.rank(&sorted);
        self.tensors[n - 1][r] = value;
    }

    /// Add one loan's rank-one contributions across all orders:
    /// `P^(n) += r^n v^(n) beta^{tensor n}`.
    pub fn accumulate(
        &mut self,
        loadings: &FactorLoadings,
        coeffs: &HermiteCoefficients,
    ) -> Result<()> {
        if loadings.beta.len() != self.n_factors {
            return Err(Error::Dimension(format!(
                "loadings over {} factors, tensors over {}",
                loadings.beta.len(),
                self.n_factors
            )));
        }
        if coeffs.coeffs.len() < self.n_max {
            return Err(Error::Dimension(format!(
                "loan {} has {} coefficients, tensors need {}",
                coeffs.loan_id,
                coeffs.coeffs.len(),
                self.n_max
            )));
        }
        if loadings.r == 0.0 {
            return Ok(());
        }
        let support = support_of(loadings);
        let mut r_pow = 1.0;
        for n in 1..=self.n_max {
            r_pow *= loadings.r;
            let w = r_pow * coeffs.v_n(n);
            if w == 0.0 {
                continue;
            }
            let tensor = &mut self.tensors[n - 1];
            for_each_multiset(&support, n, &self.binom, &mut |rank, prod, _| {
                tensor[rank] += w * prod;
            });
        }
        Ok(())
    }

    /// Full n-fold contraction with `loadings.beta`, expanding each stored
    /// sorted index pattern by its multinomial multiplicity.
    pub fn contract(&self, loadings: &FactorLoadings, n: usize) -> Result<f64> {
        if n == 0 || n > self.n_max {
            return Err(Error::Dimension(format!(
                "contraction order {n} outside 1..={}",
                self.n_max
            )));
        }
        if loadings.beta.len() != self.n_factors {
            return Err(Error::Dimension(format!(
                "loadings over {} factors, tensors over {}",
                loadings.beta.len(),
                self.n_factors
            )));
        }
        let support = support_of(loadings);
        let tensor = &self.tensors[n - 1];
        let fact_n = self.fact[n];
        let mut acc = 0.0;
        for_each_multiset(&support, n, &self.binom, &mut |rank, prod, denom| {
            acc += (fact_n / denom) * prod * tensor[rank];
        });
        Ok(acc)
    }
}

fn support_of(loadings: &FactorLoadings) -> Vec<(usize, f64)> {
    loadings
        .beta
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != 0.0)
        .map(|(k, &b)| (k, b))
        .collect()
}

// Visits every sorted multiset of size n drawn from `support` (factor
// indices ascending), passing (dense rank, product of beta values,
// product of run-length factorials). The last argument is the multinomial
// denominator: multiplicity = n! / denom.
fn for_each_multiset(
    support: &[(usize, f64)],
    n: usize,
    binom: &BinomTable,
    f: &mut impl FnMut(usize, f64, f64),
) {
    if support.is_empty() {
        return;
    }
    // iterative odometer over non-decreasing selections of support positions
    let mut sel = vec![0usize; n];
    // per-depth accumulators, entry t built from entry t-1
    let mut rank = vec![0usize; n + 1];
    let mut prod = vec![1.0f64; n + 1];
    let mut denom = vec![1.0f64; n + 1];
    let mut run = vec![0usize; n + 1];
    let mut depth = 0usize;
    loop {
        // extend to full depth with current sel values
        while depth < n {
            let pos = sel[depth];
            let (k, b) = support[pos];
            rank[depth + 1] = rank[depth] + binom.get(k + depth, depth + 1);
            prod[depth + 1] = prod[depth] * b;
            let r = if depth > 0 && sel[depth - 1] == pos {
                run[depth] + 1
            } else {
                1
            };
            run[depth + 1] = r;
            denom[depth + 1] = denom[depth] * r as f64;
            depth += 1;
        }
        f(rank[n], prod[n], denom[n]);
        // advance: find the deepest position that can still move right
        let mut level = n;
        loop {
            if level == 0 {
                return;
            }
            level -= 1;
            if sel[level] + 1 < support.len() {
                let next = sel[level] + 1;
                for s in sel.iter_mut().skip(level) {
                    *s = next;
                }
                depth = level;
                break;
            }
        }
    }
}

/// Accumulate the portfolio tensors from per-loan loadings and coefficients.
pub fn build_tensors<'a, I>(loans: I, n_max: usize, n_factors: usize) -> Result<TensorSet>
where
    I: IntoIterator<Item = (&'a FactorLoadings, &'a HermiteCoefficients)>,
{
    let mut tensors = TensorSet::new(n_factors, n_max)?;
    for (loadings, coeffs) in loans {
        tensors.accumulate(loadings, coeffs)?;
    }
    Ok(tensors)
}

/// One loan's slice of the allocation.
#[derive(Clone, Debug)]
pub struct LoanAllocation {
    pub loan_id: String,
    /// Standalone deviation `sigma_i = sqrt(standalone variance)`.
    pub sigma_i: f64,
    /// Euler contribution `sigma_i^c = cov(v_i, v_p) / sigma_p`.
    pub sigma_c: f64,
    /// Filled by [`capital_charges`].
    pub capital_charge: Option<f64>,
}

/// Allocation run metadata.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub n_max: usize,
    /// Loans whose total covariance with the portfolio came out negative.
    /// Legitimate for hedge-like positions, but with long-only credit a
    /// likely sign of a too-low series order.
    pub negative_contributions: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct AllocationReport {
    pub sigma_p: f64,
    pub loans: Vec<LoanAllocation>,
    pub diagnostics: Diagnostics,
}

impl AllocationReport {
    pub fn sigma_c_sum(&self) -> f64 {
        self.loans
            .iter()
            .map(|l| l.sigma_c)
            .collect::<KahanSum>()
            .value()
    }

    pub fn capital_sum(&self) -> Option<f64> {
        let mut acc = KahanSum::new();
        for l in &self.loans {
            acc.add(l.capital_charge?);
        }
        Some(acc.value())
    }
}

/// Hermite coefficients for every loan, in loan order. Parallel over loans;
/// output is position-stable.
pub fn compute_coefficients(
    portfolio: &Portfolio,
    cfg: &ModelConfig,
) -> Result<Vec<HermiteCoefficients>> {
    cfg.validate()?;
    portfolio
        .loans()
        .par_iter()
        .enumerate()
        .map(|(li, loan)| hermite_coeffs(loan, portfolio.loadings_of(li), cfg))
        .collect()
}

// Centered same-asset covariance block for one borrower's loans: all of
// them share a single eps, so cross moments are one-dimensional integrals
// with splits from every loan.
fn borrower_cross_block(vfs: &[ValueFn], means: &[f64], cfg: &ModelConfig) -> Result<Vec<f64>> {
    let m = vfs.len();
    let integ = cfg.integrator()?;
    let t = integ.cutoff();
    let mut splits = Vec::new();
    for vf in vfs {
        splits.extend(vf.splits());
    }
    let grid = integ.nodes_on(-t, t, &splits);
    // centered node values per loan, node-major for locality
    let mut vals = vec![0.0f64; grid.len() * m];
    for (g, &(x, _)) in grid.iter().enumerate() {
        for (i, vf) in vfs.iter().enumerate() {
            let v = vf.eval(x) - means[i];
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loan value at eps = {x}"
                )));
            }
            vals[g * m + i] = v;
        }
    }
    let tail = norm_sf(t);
    let lo: Vec<f64> = vfs
        .iter()
        .zip(means)
        .map(|(vf, &mu)| vf.eval(-t) - mu)
        .collect();
    let hi: Vec<f64> = vfs
        .iter()
        .zip(means)
        .map(|(vf, &mu)| vf.eval(t) - mu)
        .collect();
    let mut block = vec![0.0f64; m * m];
    for i in 0..m {
        for j in i..m {
            let mut acc = grid
                .iter()
                .enumerate()
                .map(|(g, &(_, w))| w * vals[g * m + i] * vals[g * m + j])
                .sum::<f64>();
            acc += tail * (lo[i] * lo[j] + hi[i] * hi[j]);
            block[i * m + j] = acc;
            block[j * m + i] = acc;
        }
    }
    Ok(block)
}

// Loss-uncertainty covariance between two loans of one borrower: defaults
// are nested (the higher-pd loan defaults whenever the lower-pd one does)
// and the comonotone recovery draws are booked at their covariance bound
// sqrt of the variance product, giving
// min(p_i, p_j) sqrt(l_i (1-l_i) l_j (1-l_j)) / k on the discounted faces.
// The bound is attained exactly when the two loss means coincide (identical
// Beta quantile maps); it reduces to the standalone recovery variance when
// i = j.
fn recovery_cross(
    pd_i: f64,
    lgd_i: f64,
    face_i: f64,
    pd_j: f64,
    lgd_j: f64,
    face_j: f64,
    k: f64,
) -> f64 {
    if !k.is_finite() {
        return 0.0;
    }
    let spread = (lgd_i * (1.0 - lgd_i) * lgd_j * (1.0 - lgd_j)).sqrt();
    pd_i.min(pd_j) * spread / k * face_i * face_j
}

// Shared assembly: given each loan's cross-borrower covariance total (for
// the tensor path, sum_n r^n v^(n) contract - sum_n r^{2n} v^(n) V_a^(n);
// for the brute-force oracle, the directly integrated pair sums), add the
// same-borrower block and normalize into a report.
pub(crate) fn assemble_report(
    portfolio: &Portfolio,
    coeffs: &[HermiteCoefficients],
    cfg: &ModelConfig,
    tensor_cross: Vec<f64>,
) -> Result<AllocationReport> {
    let n_loans = portfolio.n_loans();

    // <v_i V_a>: standalone variance plus, for multi-loan borrowers, the
    // direct integral and recovery coupling against each sibling loan
    let mut own_block = vec![0.0f64; n_loans];
    for li in 0..n_loans {
        own_block[li] = coeffs[li].standalone_variance;
    }
    let multi: Vec<usize> = (0..portfolio.n_borrowers())
        .filter(|&bi| portfolio.loans_of(bi).len() > 1)
        .collect();
    let blocks: Vec<(usize, Vec<f64>)> = multi
        .par_iter()
        .map(|&bi| -> Result<(usize, Vec<f64>)> {
            let lis = portfolio.loans_of(bi);
            let loadings = &portfolio.borrowers()[bi].loadings;
            let vfs: Vec<ValueFn> = lis
                .iter()
                .map(|&li| ValueFn::new(&portfolio.loans()[li], loadings.r, cfg))
                .collect::<Result<_>>()?;
            let means: Vec<f64> = lis.iter().map(|&li| coeffs[li].mean).collect();
            Ok((bi, borrower_cross_block(&vfs, &means, cfg)?))
        })
        .collect::<Result<_>>()?;
    for (bi, block) in blocks {
        let lis = portfolio.loans_of(bi);
        let m = lis.len();
        let k = cfg.recovery_k;
        for (ii, &li) in lis.iter().enumerate() {
            let loan_i = &portfolio.loans()[li];
            let face_i = ValueFn::new(loan_i, portfolio.loadings_of(li).r, cfg)?.discounted_face();
            let mut acc = own_block[li];
            for (jj, &lj) in lis.iter().enumerate() {
                if jj == ii {
                    continue;
                }
                let loan_j = &portfolio.loans()[lj];
                let face_j =
                    ValueFn::new(loan_j, portfolio.loadings_of(lj).r, cfg)?.discounted_face();
                acc += block[ii * m + jj]
                    + recovery_cross(
                        loan_i.pd_horizon,
                        loan_i.lgd,
                        face_i,
                        loan_j.pd_horizon,
                        loan_j.lgd,
                        face_j,
                        k,
                    );
            }
            own_block[li] = acc;
        }
    }

    // total variance and the per-loan covariance shares
    let mut cov_with_portfolio = vec![0.0f64; n_loans];
    let mut total = KahanSum::new();
    for li in 0..n_loans {
        let c = own_block[li] + tensor_cross[li];
        cov_with_portfolio[li] = c;
        total.add(c);
    }
    let total_var = total.value();
    if !(total_var > 0.0) {
        return Err(Error::Numerical(format!(
            "total portfolio variance {total_var} is not positive; the series \
             truncation is too aggressive, increase n_max"
        )));
    }
    let sigma_p = total_var.sqrt();

    let mut negative = Vec::new();
    let loans = (0..n_loans)
        .map(|li| {
            if cov_with_portfolio[li] < 0.0 {
                negative.push(portfolio.loans()[li].loan_id.clone());
            }
            LoanAllocation {
                loan_id: portfolio.loans()[li].loan_id.clone(),
                sigma_i: coeffs[li].standalone_variance.sqrt(),
                sigma_c: cov_with_portfolio[li] / sigma_p,
                capital_charge: None,
            }
        })
        .collect();
    Ok(AllocationReport {
        sigma_p,
        loans,
        diagnostics: Diagnostics {
            n_max: cfg.n_max,
            negative_contributions: negative,
        },
    })
}

// Per-borrower coefficient sums V_a^(n), n = 1..=n_max.
fn borrower_coeff_sums(
    portfolio: &Portfolio,
    coeffs: &[HermiteCoefficients],
    n_max: usize,
) -> Vec<Vec<f64>> {
    (0..portfolio.n_borrowers())
        .map(|bi| {
            let mut sums = vec![0.0f64; n_max];
            for &li in portfolio.loans_of(bi) {
                for n in 1..=n_max {
                    sums[n - 1] += coeffs[li].v_n(n);
                }
            }
            sums
        })
        .collect()
}

/// Euler risk contributions for every loan through the tensor path.
pub fn risk_contributions(
    portfolio: &Portfolio,
    coeffs: &[HermiteCoefficients],
    tensors: &TensorSet,
    cfg: &ModelConfig,
) -> Result<AllocationReport> {
    cfg.validate()?;
    if coeffs.len() != portfolio.n_loans() {
        return Err(Error::Dimension(format!(
            "{} coefficient sets for {} loans",
            coeffs.len(),
            portfolio.n_loans()
        )));
    }
    if tensors.n_factors() != portfolio.n_factors() || tensors.n_max() < cfg.n_max {
        return Err(Error::Dimension(
            "tensor set does not match the portfolio factor space or order".into(),
        ));
    }
    let n_max = cfg.n_max;
    let va = borrower_coeff_sums(portfolio, coeffs, n_max);

    let tensor_cross: Vec<f64> = (0..portfolio.n_loans())
        .into_par_iter()
        .map(|li| -> Result<f64> {
            let loadings = portfolio.loadings_of(li);
            let bi = portfolio.borrower_of(li);
            let mut acc = 0.0;
            let mut r_pow = 1.0;
            for n in 1..=n_max {
                r_pow *= loadings.r;
                let v_n = coeffs[li].v_n(n);
                if loadings.r > 0.0 {
                    acc += r_pow * v_n * tensors.contract(loadings, n)?;
                }
                acc -= r_pow * r_pow * v_n * va[bi][n - 1];
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    assemble_report(portfolio, coeffs, cfg, tensor_cross)
}

/// Independently coded scalar path for single-factor portfolios: the
/// order-n tensor collapses to `p_n = sum_i r_i^n v_i^(n) beta_i^n`.
pub fn single_factor_contributions(
    portfolio: &Portfolio,
    coeffs: &[HermiteCoefficients],
    cfg: &ModelConfig,
) -> Result<AllocationReport> {
    cfg.validate()?;
    if portfolio.n_factors() != 1 {
        return Err(Error::Dimension(format!(
            "single-factor path invoked on a {}-factor portfolio",
            portfolio.n_factors()
        )));
    }
    if coeffs.len() != portfolio.n_loans() {
        return Err(Error::Dimension(format!(
            "{} coefficient sets for {} loans",
            coeffs.len(),
            portfolio.n_loans()
        )));
    }
    let n_max = cfg.n_max;
    let mut p_scalar = vec![0.0f64; n_max];
    for li in 0..portfolio.n_loans() {
        let loadings = portfolio.loadings_of(li);
        let beta = if loadings.r > 0.0 {
            loadings.beta[0]
        } else {
            0.0
        };
        let mut w = 1.0;
        for n in 1..=n_max {
            w *= loadings.r * beta;
            p_scalar[n - 1] += w * coeffs[li].v_n(n);
        }
    }
    let va = borrower_coeff_sums(portfolio, coeffs, n_max);
    let tensor_cross: Vec<f64> = (0..portfolio.n_loans())
        .map(|li| {
            let loadings = portfolio.loadings_of(li);
            let bi = portfolio.borrower_of(li);
            let beta = if loadings.r > 0.0 {
                loadings.beta[0]
            } else {
                0.0
            };
            let mut acc = 0.0;
            let mut rb = 1.0;
            let mut r_sq = 1.0;
            for n in 1..=n_max {
                rb *= loadings.r * beta;
                r_sq *= loadings.r * loadings.r;
                let v_n = coeffs[li].v_n(n);
                acc += rb * v_n * p_scalar[n - 1];
                acc -= r_sq * v_n * va[bi][n - 1];
            }
            acc
        })
        .collect();
    assemble_report(portfolio, coeffs, cfg, tensor_cross)
}

/// Attach capital charges `(sigma_i^c / sigma_p) * total_ec` to a report.
pub fn capital_charges(mut report: AllocationReport, total_ec: f64) -> Result<AllocationReport> {
    if !(total_ec >= 0.0 && total_ec.is_finite()) {
        return Err(Error::Domain(format!(
            "total economic capital {total_ec} must be non-negative"
        )));
    }
    if !(report.sigma_p > 0.0) {
        return Err(Error::Domain(
            "degenerate portfolio: sigma_p = 0 admits no capital allocation".into(),
        ));
    }
    for loan in &mut report.loans {
        loan.capital_charge = Some(loan.sigma_c / report.sigma_p * total_ec);
    }
    Ok(report)
}

/// Full analytic pipeline: coefficients, tensors, contributions.
pub fn allocate(portfolio: &Portfolio, cfg: &ModelConfig) -> Result<AllocationReport> {
    let coeffs = compute_coefficients(portfolio, cfg)?;
    let pairs = (0..portfolio.n_loans()).map(|li| (portfolio.loadings_of(li), &coeffs[li]));
    let tensors = build_tensors(pairs, cfg.n_max, portfolio.n_factors())?;
    risk_contributions(portfolio, &coeffs, &tensors, cfg)
}
