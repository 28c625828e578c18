//! Portfolio, run-configuration, and report files.
//!
//! The portfolio format is sectioned whitespace-delimited text with sparse
//! 1-based `index:value` factor loadings, so a 120-factor portfolio does
//! not need 120 dense columns. All floats serialize with 17 significant
//! digits, which round-trips every f64 exactly: parsing a saved file and
//! saving it again reproduces the bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::{AllocationReport, Diagnostics, LoanAllocation};
use crate::error::{Error, Result};
use crate::factor::{Borrower, FactorLoadings};
use crate::oracle::McConfig;
use crate::portfolio::Portfolio;
use crate::valuation::{Loan, ModelConfig, QuadSettings};

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Raw portfolio file contents: structurally parsed, semantically
/// unvalidated until [`into_portfolio`](PortfolioFile::into_portfolio).
#[derive(Clone, Debug)]
pub struct PortfolioFile {
    pub n_factors: usize,
    pub borrowers: Vec<Borrower>,
    pub loans: Vec<Loan>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Factors,
    Borrowers,
    Loans,
}

impl PortfolioFile {
    pub fn parse(text: &str) -> Result<PortfolioFile> {
        let mut section = Section::Preamble;
        let mut n_factors: Option<usize> = None;
        let mut borrowers = Vec::new();
        let mut loans = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[factors]" => Section::Factors,
                    "[borrowers]" => Section::Borrowers,
                    "[loans]" => Section::Loans,
                    other => return Err(parse_err(line_no, format!("unknown section {other}"))),
                };
                continue;
            }
            match section {
                Section::Preamble => {
                    return Err(parse_err(
                        line_no,
                        "content before the first section header",
                    ))
                }
                Section::Factors => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| parse_err(line_no, "expected `n_factors = <count>`"))?;
                    if key.trim() != "n_factors" {
                        return Err(parse_err(
                            line_no,
                            format!("unknown factors key {:?}", key.trim()),
                        ));
                    }
                    let nf: usize = value.trim().parse().map_err(|_| {
                        parse_err(line_no, format!("bad factor count {:?}", value.trim()))
                    })?;
                    if nf == 0 {
                        return Err(parse_err(line_no, "n_factors must be at least 1"));
                    }
                    n_factors = Some(nf);
                }
                Section::Borrowers => {
                    let nf = n_factors.ok_or_else(|| {
                        parse_err(line_no, "[borrowers] before n_factors is known")
                    })?;
                    borrowers.push(parse_borrower(line, line_no, nf)?);
                }
                Section::Loans => {
                    loans.push(parse_loan(line, line_no)?);
                }
            }
        }
        let n_factors =
            n_factors.ok_or_else(|| parse_err(1, "missing [factors] section with n_factors"))?;
        Ok(PortfolioFile {
            n_factors,
            borrowers,
            loans,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PortfolioFile> {
        PortfolioFile::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialization: fixed section order, one record per line,
    /// floats at 17 significant digits, betas sparse ascending.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[factors]\n");
        let _ = writeln!(out, "n_factors = {}", self.n_factors);
        out.push_str("\n[borrowers]\n");
        for b in &self.borrowers {
            let _ = write!(out, "{} {}", b.borrower_id, fmt_f64(b.loadings.r));
            for (i, &v) in b.loadings.beta.iter().enumerate() {
                if v != 0.0 {
                    let _ = write!(out, " {}:{}", i + 1, fmt_f64(v));
                }
            }
            out.push('\n');
        }
        out.push_str("\n[loans]\n");
        for l in &self.loans {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                l.loan_id,
                l.borrower_id,
                fmt_f64(l.v0),
                fmt_f64(l.t_m),
                fmt_f64(l.pd_horizon),
                fmt_f64(l.pd_maturity),
                fmt_f64(l.lgd)
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    /// Validate into a queryable portfolio. The horizon comes from the run
    /// configuration, not the file.
    pub fn into_portfolio(self, horizon_years: f64) -> Result<Portfolio> {
        Portfolio::new(self.n_factors, self.borrowers, self.loans, horizon_years)
    }
}

fn parse_borrower(line: &str, line_no: usize, n_factors: usize) -> Result<Borrower> {
    let mut tok = line.split_whitespace();
    let id = tok.next().unwrap();
    let r: f64 = tok
        .next()
        .ok_or_else(|| parse_err(line_no, "borrower record needs `id r [idx:val ...]`"))?
        .parse()
        .map_err(|_| parse_err(line_no, "bad systematic weight"))?;
    let mut beta = vec![0.0f64; n_factors];
    let mut seen = vec![false; n_factors];
    for pair in tok {
        let (is, vs) = pair
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, format!("loading {pair:?} is not index:value")))?;
        let i: usize = is
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad factor index {is:?}")))?;
        if i == 0 || i > n_factors {
            return Err(parse_err(
                line_no,
                format!("factor index {i} outside 1..={n_factors}"),
            ));
        }
        if seen[i - 1] {
            return Err(parse_err(line_no, format!("factor index {i} repeated")));
        }
        seen[i - 1] = true;
        beta[i - 1] = vs
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad loading value {vs:?}")))?;
    }
    Ok(Borrower::new(id, FactorLoadings { r, beta }))
}

fn parse_loan(line: &str, line_no: usize) -> Result<Loan> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 7 {
        return Err(parse_err(
            line_no,
            format!(
                "loan record needs 7 fields (loan_id borrower_id v0 t_m pd_horizon \
                 pd_maturity lgd), found {}",
                tok.len()
            ),
        ));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| parse_err(line_no, format!("bad {what} {s:?}")))
    };
    Ok(Loan {
        loan_id: tok[0].to_string(),
        borrower_id: tok[1].to_string(),
        v0: num(tok[2], "notional")?,
        t_m: num(tok[3], "maturity")?,
        pd_horizon: num(tok[4], "pd_horizon")?,
        pd_maturity: num(tok[5], "pd_maturity")?,
        lgd: num(tok[6], "lgd")?,
    })
}

/// Parse, validate, and assemble in one step.
pub fn load_portfolio(path: impl AsRef<Path>, horizon_years: f64) -> Result<Portfolio> {
    PortfolioFile::load(path)?.into_portfolio(horizon_years)
}

/// Run settings: the model parameters plus simulation and capital inputs.
/// Unknown keys are rejected so typos cannot silently fall back to defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub horizon_years: f64,
    pub risk_free_rate: f64,
    pub lambda_mpr: f64,
    /// Recovery-mixture dispersion; `inf` disables stochastic recovery.
    pub recovery_k: f64,
    pub n_max: usize,
    pub quad_nodes: usize,
    pub total_economic_capital: Option<f64>,
    pub mc: McSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub seed: u64,
    pub scenarios: usize,
    pub block_size: usize,
    pub antithetic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        RunConfig {
            horizon_years: m.horizon_years,
            risk_free_rate: m.risk_free_rate,
            lambda_mpr: m.lambda_mpr,
            recovery_k: m.recovery_k,
            n_max: m.n_max,
            quad_nodes: m.quad.nodes,
            total_economic_capital: None,
            mc: McSection::default(),
        }
    }
}

impl Default for McSection {
    fn default() -> Self {
        let m = McConfig::default();
        McSection {
            seed: m.seed,
            scenarios: m.n_scenarios,
            block_size: m.block_size,
            antithetic: m.antithetic,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.model_config().validate()?;
        cfg.mc_config().validate()?;
        if let Some(ec) = cfg.total_economic_capital {
            if !(ec >= 0.0 && ec.is_finite()) {
                return Err(Error::Validation(format!(
                    "total_economic_capital {ec} must be non-negative"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            horizon_years: self.horizon_years,
            risk_free_rate: self.risk_free_rate,
            lambda_mpr: self.lambda_mpr,
            recovery_k: self.recovery_k,
            n_max: self.n_max,
            quad: QuadSettings {
                nodes: self.quad_nodes,
                ..QuadSettings::default()
            },
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_scenarios: self.mc.scenarios,
            seed: self.mc.seed,
            block_size: self.mc.block_size,
            antithetic: self.mc.antithetic,
        }
    }
}

// The summary row's reserved id.
const PORTFOLIO_ROW: &str = "PORTFOLIO";

/// Report as comma-delimited text: one row per loan, then a summary row
/// whose sigma_c column holds sigma_p and whose capital column holds the
/// charge total. Diagnostics are runtime metadata and are not persisted.
pub fn report_to_text(report: &AllocationReport) -> Result<String> {
    let mut out = String::from("loan_id,sigma_i,sigma_c,capital_charge\n");
    for l in &report.loans {
        if l.loan_id == PORTFOLIO_ROW || l.loan_id.contains(',') {
            return Err(Error::Validation(format!(
                "loan id {:?} cannot be written to a report",
                l.loan_id
            )));
        }
        let cap = l.capital_charge.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            l.loan_id,
            fmt_f64(l.sigma_i),
            fmt_f64(l.sigma_c),
            cap
        );
    }
    let total = report.capital_sum().map(fmt_f64).unwrap_or_default();
    let _ = writeln!(
        out,
        "{PORTFOLIO_ROW},,{},{}",
        fmt_f64(report.sigma_p),
        total
    );
    Ok(out)
}

pub fn save_report(report: &AllocationReport, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, report_to_text(report)?)?)
}

pub fn parse_report(text: &str) -> Result<AllocationReport> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty report"))?;
    if header.trim() != "loan_id,sigma_i,sigma_c,capital_charge" {
        return Err(parse_err(1, "unrecognized report header"));
    }
    let mut loans = Vec::new();
    let mut sigma_p = None;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if sigma_p.is_some() {
            return Err(parse_err(line_no, "rows after the summary row"));
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(parse_err(line_no, "expected 4 columns"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| parse_err(line_no, format!("bad number {s:?}")))
        };
        if cols[0] == PORTFOLIO_ROW {
            sigma_p = Some(num(cols[2])?);
        } else {
            loans.push(LoanAllocation {
                loan_id: cols[0].to_string(),
                sigma_i: num(cols[1])?,
                sigma_c: num(cols[2])?,
                capital_charge: if cols[3].is_empty() {
                    None
                } else {
                    Some(num(cols[3])?)
                },
            });
        }
    }
    let sigma_p = sigma_p.ok_or_else(|| parse_err(text.lines().count(), "missing summary row"))?;
    Ok(AllocationReport {
        sigma_p,
        loans,
        diagnostics: Diagnostics {
            n_max: 0,
            negative_contributions: Vec::new(),
        },
    })
}

pub fn load_report(path: impl AsRef<Path>) -> Result<AllocationReport> {
    parse_report(&std::fs::read_to_string(path)?)
}
