//! Validated portfolio assembly: borrowers, loans, and the index maps
//! between them.
//!
//! Construction is the single validation gate. Everything downstream
//! (allocator, oracles, serialization) assumes a [`Portfolio`] is
//! internally consistent: ids resolve, loadings are unit-norm, loan
//! parameters are in range, and matured loans carry equal horizon and
//! maturity default probabilities.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::factor::{validate_portfolio_factors, Borrower, FactorLoadings};
use crate::valuation::Loan;

#[derive(Clone, Debug)]
pub struct Portfolio {
    n_factors: usize,
    horizon_years: f64,
    borrowers: Vec<Borrower>,
    loans: Vec<Loan>,
    loan_borrower: Vec<usize>,
    borrower_loans: Vec<Vec<usize>>,
    warnings: Vec<String>,
}

impl Portfolio {
    /// Validate and index a portfolio. Repairable issues (near-unit
    /// loadings, horizon default probability of an already-matured loan)
    /// are fixed in place and reported through [`Portfolio::warnings`];
    /// everything else aggregates into one validation error naming the
    /// offending borrowers and loans.
    pub fn new(
        n_factors: usize,
        mut borrowers: Vec<Borrower>,
        mut loans: Vec<Loan>,
        horizon_years: f64,
    ) -> Result<Portfolio> {
        if n_factors == 0 {
            return Err(Error::Validation(
                "portfolio needs at least one factor".into(),
            ));
        }
        if !(horizon_years > 0.0 && horizon_years.is_finite()) {
            return Err(Error::Validation(format!(
                "horizon {horizon_years} must be positive"
            )));
        }
        if loans.is_empty() {
            return Err(Error::Validation("portfolio has no loans".into()));
        }
        if borrowers.is_empty() {
            return Err(Error::Validation("portfolio has no borrowers".into()));
        }

        let mut errors: Vec<String> = Vec::new();
        let mut warnings: Vec<String> = Vec::new();

        let mut borrower_index: HashMap<String, usize> = HashMap::with_capacity(borrowers.len());
        for (i, b) in borrowers.iter().enumerate() {
            if b.borrower_id.is_empty() {
                errors.push(format!("borrower #{i} has an empty id"));
                continue;
            }
            if borrower_index.insert(b.borrower_id.clone(), i).is_some() {
                errors.push(format!("duplicate borrower id {}", b.borrower_id));
            }
        }

        let factor_report = validate_portfolio_factors(&mut borrowers, n_factors, true);
        errors.extend(factor_report.errors);
        warnings.extend(factor_report.warnings);

        {
            let mut seen_loan: HashMap<&str, ()> = HashMap::with_capacity(loans.len());
            for loan in loans.iter() {
                if loan.loan_id.is_empty() {
                    errors.push("loan with empty id".into());
                } else if seen_loan.insert(loan.loan_id.as_str(), ()).is_some() {
                    errors.push(format!("duplicate loan id {}", loan.loan_id));
                }
            }
        }

        let mut loan_borrower = Vec::with_capacity(loans.len());
        for loan in loans.iter_mut() {
            if loan.t_m <= horizon_years && loan.pd_horizon != loan.pd_maturity {
                warnings.push(format!(
                    "loan {}: matured before horizon; pd_horizon {} replaced by pd_maturity {}",
                    loan.loan_id, loan.pd_horizon, loan.pd_maturity
                ));
                loan.pd_horizon = loan.pd_maturity;
            }
            if let Err(e) = loan.validate(horizon_years) {
                errors.push(e.to_string());
            }
            match borrower_index.get(loan.borrower_id.as_str()) {
                Some(&bi) => loan_borrower.push(bi),
                None => {
                    errors.push(format!(
                        "loan {} references unknown borrower {}",
                        loan.loan_id, loan.borrower_id
                    ));
                    loan_borrower.push(usize::MAX);
                }
            }
        }

        let mut borrower_loans: Vec<Vec<usize>> = vec![Vec::new(); borrowers.len()];
        for (li, &bi) in loan_borrower.iter().enumerate() {
            if bi != usize::MAX {
                borrower_loans[bi].push(li);
            }
        }
        for (bi, loan_list) in borrower_loans.iter().enumerate() {
            if loan_list.is_empty() {
                errors.push(format!(
                    "borrower {} has no loans",
                    borrowers[bi].borrower_id
                ));
            }
        }

        if !errors.is_empty() {
            return Err(Error::Validation(errors.join("; ")));
        }

        for (bi, b) in borrowers.iter_mut().enumerate() {
            b.loan_ids = borrower_loans[bi]
                .iter()
                .map(|&li| loans[li].loan_id.clone())
                .collect();
        }

        Ok(Portfolio {
            n_factors,
            horizon_years,
            borrowers,
            loans,
            loan_borrower,
            borrower_loans,
            warnings,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn horizon_years(&self) -> f64 {
        self.horizon_years
    }

    pub fn n_loans(&self) -> usize {
        self.loans.len()
    }

    pub fn n_borrowers(&self) -> usize {
        self.borrowers.len()
    }

    pub fn loans(&self) -> &[Loan] {
        &self.loans
    }

    pub fn borrowers(&self) -> &[Borrower] {
        &self.borrowers
    }

    /// Borrower index of loan `li`.
    pub fn borrower_of(&self, li: usize) -> usize {
        self.loan_borrower[li]
    }

    /// Loan indices of borrower `bi`, in input order.
    pub fn loans_of(&self, bi: usize) -> &[usize] {
        &self.borrower_loans[bi]
    }

    /// Loadings governing loan `li`'s asset return.
    pub fn loadings_of(&self, li: usize) -> &FactorLoadings {
        &self.borrowers[self.loan_borrower[li]].loadings
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}
