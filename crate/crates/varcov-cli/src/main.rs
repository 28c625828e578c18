//! Command-line surface for the risk-contribution engine.
//!
//! Exit codes: 0 success, 1 usage, 2 input data rejected, 3 the computation
//! failed. Reports and tables go to stdout (or `--out`); every diagnostic
//! goes to stderr so stdout stays machine-readable.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use varcov::allocator::{capital_charges, AllocationReport};
use varcov::io::{load_portfolio, load_report, report_to_text, save_report, RunConfig};
use varcov::oracle::{brute_force_contributions, convergence_study, mc_simulate};
use varcov::synth::generate_synthetic;
use varcov::{Error, Portfolio, Result};

#[derive(Parser)]
#[command(
    name = "varcov",
    version,
    about = "Euler risk contributions for credit portfolios in linear time"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytic allocation through the Hermite-tensor engine
    Allocate(RunArgs),
    /// Reference allocation by O(N^2) pairwise quadrature
    Brute(RunArgs),
    /// Monte Carlo allocation with stochastic recoveries
    Mc(McArgs),
    /// Per-loan relative differences between two reports
    Compare(CompareArgs),
    /// Monte Carlo convergence ladder against a reference allocation
    Converge(ConvergeArgs),
    /// Generate a synthetic portfolio file
    Gen(GenArgs),
    /// Validate a portfolio file and exit
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override: risk horizon in years
    #[arg(long)]
    horizon_years: Option<f64>,
    /// Override: continuously compounded risk-free rate
    #[arg(long)]
    risk_free_rate: Option<f64>,
    /// Override: market price of risk
    #[arg(long)]
    lambda_mpr: Option<f64>,
    /// Override: recovery dispersion parameter (inf = deterministic recovery)
    #[arg(long)]
    recovery_k: Option<f64>,
    /// Override: Hermite series truncation order
    #[arg(long)]
    n_max: Option<usize>,
    /// Override: quadrature nodes per panel
    #[arg(long)]
    quad_nodes: Option<usize>,
    /// Override: capital to distribute over the loans
    #[arg(long)]
    total_economic_capital: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.horizon_years {
            cfg.horizon_years = v;
        }
        if let Some(v) = self.risk_free_rate {
            cfg.risk_free_rate = v;
        }
        if let Some(v) = self.lambda_mpr {
            cfg.lambda_mpr = v;
        }
        if let Some(v) = self.recovery_k {
            cfg.recovery_k = v;
        }
        if let Some(v) = self.n_max {
            cfg.n_max = v;
        }
        if let Some(v) = self.quad_nodes {
            cfg.quad_nodes = v;
        }
        if let Some(v) = self.total_economic_capital {
            cfg.total_economic_capital = Some(v);
        }
        cfg.model_config().validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Portfolio file
    #[arg(long)]
    portfolio: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Override: generator seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override: scenario count
    #[arg(long)]
    scenarios: Option<usize>,
    /// Override: scenarios per reduction block
    #[arg(long)]
    block_size: Option<usize>,
    /// Override: antithetic pairing (true/false)
    #[arg(long)]
    antithetic: Option<bool>,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference report (the denominator of the relative differences)
    #[arg(long)]
    baseline: PathBuf,
    /// Report under test
    #[arg(long)]
    candidate: PathBuf,
    /// Table destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    /// Portfolio file
    #[arg(long)]
    portfolio: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated scenario counts, e.g. 1e4,1e5,1e6
    #[arg(long)]
    ladder: String,
    /// Reference report file; the analytic allocation when omitted
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Table destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Number of loans
    #[arg(long)]
    loans: usize,
    /// Number of borrowers (each receives at least one loan)
    #[arg(long)]
    borrowers: usize,
    /// Number of systematic factors
    #[arg(long)]
    factors: usize,
    /// Generator seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Portfolio destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Portfolio file
    #[arg(long)]
    portfolio: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_data_error() { 2 } else { 3 });
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Allocate(args) => {
            let cfg = args.config.resolve()?;
            let portfolio = load(&args.portfolio, &cfg)?;
            let report = varcov::allocate(&portfolio, &cfg.model_config())?;
            emit_report(report, &cfg, args.out.as_deref())
        }
        Cmd::Brute(args) => {
            let cfg = args.config.resolve()?;
            let portfolio = load(&args.portfolio, &cfg)?;
            let report = brute_force_contributions(&portfolio, &cfg.model_config())?;
            emit_report(report, &cfg, args.out.as_deref())
        }
        Cmd::Mc(args) => {
            let cfg = args.run.config.resolve()?;
            let portfolio = load(&args.run.portfolio, &cfg)?;
            let mut mc = cfg.mc_config();
            if let Some(v) = args.seed {
                mc.seed = v;
            }
            if let Some(v) = args.scenarios {
                mc.n_scenarios = v;
            }
            if let Some(v) = args.block_size {
                mc.block_size = v;
            }
            if let Some(v) = args.antithetic {
                mc.antithetic = v;
            }
            let (report, stats) = mc_simulate(&portfolio, &cfg.model_config(), &mc)?;
            let max_se = stats.sigma_c_se.iter().cloned().fold(0.0f64, f64::max);
            eprintln!(
                "mc: {} scenarios in {} blocks, sigma_p = {:.6e} (jackknife se {:.2e}), \
                 largest sigma_c se {:.2e}",
                stats.n_scenarios, stats.n_blocks, report.sigma_p, stats.sigma_p_se, max_se
            );
            emit_report(report, &cfg, args.run.out.as_deref())
        }
        Cmd::Compare(args) => {
            let baseline = load_report(&args.baseline)?;
            let candidate = load_report(&args.candidate)?;
            compare(&baseline, &candidate, args.out.as_deref())
        }
        Cmd::Converge(args) => {
            let cfg = args.config.resolve()?;
            let portfolio = load(&args.portfolio, &cfg)?;
            let ladder = parse_ladder(&args.ladder)?;
            let reference = match &args.reference {
                Some(path) => {
                    let r = load_report(path)?;
                    check_same_loans(&portfolio, &r)?;
                    r
                }
                None => varcov::allocate(&portfolio, &cfg.model_config())?,
            };
            let rows = convergence_study(
                &portfolio,
                &cfg.model_config(),
                &cfg.mc_config(),
                &ladder,
                &reference,
            )?;
            let mut text = String::from("n_scenarios,sigma_rel_diff,sigma_times_sqrt_n\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{:.16e},{:.16e}\n",
                    r.n_scenarios, r.sigma_rel_diff, r.sigma_times_sqrt_n
                ));
            }
            write_out(&text, args.out.as_deref())
        }
        Cmd::Gen(args) => {
            let file = generate_synthetic(args.loans, args.borrowers, args.factors, args.seed)?;
            write_out(&file.to_text(), args.out.as_deref())
        }
        Cmd::Validate(args) => {
            let cfg = args.config.resolve()?;
            let portfolio = load(&args.portfolio, &cfg)?;
            eprintln!(
                "ok: {} loans, {} borrowers, {} factors",
                portfolio.n_loans(),
                portfolio.n_borrowers(),
                portfolio.n_factors()
            );
            Ok(())
        }
    }
}

// Single validation path: every subcommand that reads a portfolio goes
// through here, so `validate` accepts exactly what `allocate` accepts.
fn load(path: &std::path::Path, cfg: &RunConfig) -> Result<Portfolio> {
    let portfolio = load_portfolio(path, cfg.horizon_years)?;
    for w in portfolio.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(portfolio)
}

fn emit_report(
    report: AllocationReport,
    cfg: &RunConfig,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let neg = &report.diagnostics.negative_contributions;
    if !neg.is_empty() {
        let shown: Vec<&str> = neg.iter().take(5).map(String::as_str).collect();
        let suffix = if neg.len() > 5 { ", ..." } else { "" };
        eprintln!(
            "warning: {} loans carry negative covariance with the portfolio \
             ({}{suffix}); consider a higher n_max",
            neg.len(),
            shown.join(", ")
        );
    }
    let report = match cfg.total_economic_capital {
        Some(ec) => capital_charges(report, ec)?,
        None => report,
    };
    match out {
        Some(path) => save_report(&report, path),
        None => {
            print!("{}", report_to_text(&report)?);
            Ok(())
        }
    }
}

fn write_out(text: &str, out: Option<&std::path::Path>) -> Result<()> {
    match out {
        Some(path) => Ok(std::fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn compare(
    baseline: &AllocationReport,
    candidate: &AllocationReport,
    out: Option<&std::path::Path>,
) -> Result<()> {
    if baseline.loans.len() != candidate.loans.len() {
        return Err(Error::Validation(format!(
            "reports cover {} vs {} loans",
            baseline.loans.len(),
            candidate.loans.len()
        )));
    }
    let mut text = String::from("loan_id,sigma_c_baseline,sigma_c_candidate,rel_diff\n");
    let mut rels = Vec::with_capacity(baseline.loans.len());
    for (b, c) in baseline.loans.iter().zip(&candidate.loans) {
        if b.loan_id != c.loan_id {
            return Err(Error::Validation(format!(
                "reports disagree on loan order: {} vs {}",
                b.loan_id, c.loan_id
            )));
        }
        if b.sigma_c == 0.0 {
            return Err(Error::Numerical(format!(
                "baseline contribution of {} is zero; relative difference undefined",
                b.loan_id
            )));
        }
        let rel = (c.sigma_c - b.sigma_c) / b.sigma_c;
        rels.push(rel);
        text.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            b.loan_id, b.sigma_c, c.sigma_c, rel
        ));
    }
    let n = rels.len() as f64;
    let mean = rels.iter().sum::<f64>() / n;
    let std = (rels.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    let max_abs = rels.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let sigma_p_rel = (candidate.sigma_p - baseline.sigma_p) / baseline.sigma_p;
    eprintln!(
        "compare: {} loans, rel diff mean {mean:.3e}, std {std:.3e}, max |rel| {max_abs:.3e}, \
         sigma_p rel diff {sigma_p_rel:.3e}",
        rels.len()
    );
    write_out(&text, out)
}

fn parse_ladder(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        let x: f64 = tok
            .parse()
            .map_err(|_| Error::Validation(format!("bad ladder entry {tok:?}")))?;
        if !(x.is_finite() && x >= 1.0 && x <= 1e12 && x.fract() == 0.0) {
            return Err(Error::Validation(format!(
                "ladder entry {tok:?} must be a positive whole number"
            )));
        }
        out.push(x as usize);
    }
    Ok(out)
}

fn check_same_loans(portfolio: &Portfolio, report: &AllocationReport) -> Result<()> {
    if report.loans.len() != portfolio.n_loans() {
        return Err(Error::Validation(format!(
            "reference report covers {} loans, portfolio has {}",
            report.loans.len(),
            portfolio.n_loans()
        )));
    }
    for (li, l) in report.loans.iter().enumerate() {
        if l.loan_id != portfolio.loans()[li].loan_id {
            return Err(Error::Validation(format!(
                "reference report loan {} is {}, portfolio has {}",
                li + 1,
                l.loan_id,
                portfolio.loans()[li].loan_id
            )));
        }
    }
    Ok(())
}
