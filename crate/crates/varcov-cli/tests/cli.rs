//! End-to-end checks of the compiled binary: pipeline plumbing, exit codes,
//! stdout/stderr separation, and byte-level determinism across runs.

use std::path::Path;
use std::process::{Command, Output};

use varcov::io::parse_report;

fn varcov_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varcov"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    varcov_bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary failed to launch")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout not utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr not utf-8")
}

#[test]
fn gen_validate_allocate_pipeline_holds_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let gen = run_in(
        d,
        &[
            "gen",
            "--loans",
            "12",
            "--borrowers",
            "5",
            "--factors",
            "3",
            "--seed",
            "11",
            "--out",
            "pf.txt",
        ],
    );
    assert!(gen.status.success(), "gen failed: {}", stderr_of(&gen));

    let val = run_in(d, &["validate", "--portfolio", "pf.txt"]);
    assert!(val.status.success());
    assert!(stderr_of(&val).contains("12 loans, 5 borrowers, 3 factors"));
    assert!(
        stdout_of(&val).is_empty(),
        "validate must keep stdout clean"
    );

    let alloc = run_in(
        d,
        &[
            "allocate",
            "--portfolio",
            "pf.txt",
            "--n-max",
            "10",
            "--total-economic-capital",
            "250",
            "--out",
            "report.csv",
        ],
    );
    assert!(
        alloc.status.success(),
        "allocate failed: {}",
        stderr_of(&alloc)
    );

    let report = parse_report(&std::fs::read_to_string(d.join("report.csv")).unwrap()).unwrap();
    assert_eq!(report.loans.len(), 12);
    let additivity = (report.sigma_c_sum() - report.sigma_p).abs() / report.sigma_p;
    assert!(
        additivity < 1e-12,
        "contributions drifted from sigma_p: {additivity:.2e}"
    );
    let capital = report.capital_sum().expect("charges were requested");
    assert!((capital - 250.0).abs() < 1e-9 * 250.0);

    // Without --out the same report goes to stdout, byte for byte.
    let to_stdout = run_in(
        d,
        &[
            "allocate",
            "--portfolio",
            "pf.txt",
            "--n-max",
            "10",
            "--total-economic-capital",
            "250",
        ],
    );
    assert!(to_stdout.status.success());
    assert_eq!(
        stdout_of(&to_stdout),
        std::fs::read_to_string(d.join("report.csv")).unwrap()
    );
}

#[test]
fn cli_flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_in(
        d,
        &[
            "gen",
            "--loans",
            "8",
            "--borrowers",
            "4",
            "--factors",
            "2",
            "--seed",
            "3",
            "--out",
            "pf.txt",
        ],
    );
    std::fs::write(d.join("cfg.toml"), "n_max = 1\n").unwrap();

    let low = run_in(
        d,
        &["allocate", "--portfolio", "pf.txt", "--config", "cfg.toml"],
    );
    let high = run_in(
        d,
        &[
            "allocate",
            "--portfolio",
            "pf.txt",
            "--config",
            "cfg.toml",
            "--n-max",
            "14",
        ],
    );
    assert!(low.status.success() && high.status.success());
    let low = parse_report(&stdout_of(&low)).unwrap();
    let high = parse_report(&stdout_of(&high)).unwrap();
    // A higher truncation order picks up cross terms the one-term run misses.
    assert!(
        (low.sigma_p - high.sigma_p).abs() > 1e-12 * high.sigma_p,
        "override had no effect"
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_in(
        d,
        &[
            "gen",
            "--loans",
            "10",
            "--borrowers",
            "5",
            "--factors",
            "2",
            "--seed",
            "9",
            "--out",
            "pf.txt",
        ],
    );
    let args = [
        "mc",
        "--portfolio",
        "pf.txt",
        "--scenarios",
        "20000",
        "--seed",
        "77",
        "--antithetic",
        "true",
    ];
    let a = run_in(d, &args);
    let b = run_in(d, &args);
    assert!(a.status.success());
    assert_eq!(
        stdout_of(&a),
        stdout_of(&b),
        "same seed must give the same bytes"
    );
    assert!(stderr_of(&a).contains("jackknife"));

    let g1 = run_in(
        d,
        &[
            "gen",
            "--loans",
            "10",
            "--borrowers",
            "5",
            "--factors",
            "2",
            "--seed",
            "9",
        ],
    );
    let g2 = run_in(
        d,
        &[
            "gen",
            "--loans",
            "10",
            "--borrowers",
            "5",
            "--factors",
            "2",
            "--seed",
            "9",
        ],
    );
    assert_eq!(stdout_of(&g1), stdout_of(&g2));
}

#[test]
fn compare_and_converge_read_their_own_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_in(
        d,
        &[
            "gen",
            "--loans",
            "6",
            "--borrowers",
            "3",
            "--factors",
            "2",
            "--seed",
            "21",
            "--out",
            "pf.txt",
        ],
    );
    let an = run_in(
        d,
        &[
            "allocate",
            "--portfolio",
            "pf.txt",
            "--n-max",
            "12",
            "--out",
            "an.csv",
        ],
    );
    let br = run_in(
        d,
        &[
            "brute",
            "--portfolio",
            "pf.txt",
            "--n-max",
            "12",
            "--out",
            "br.csv",
        ],
    );
    assert!(an.status.success() && br.status.success());

    let cmp = run_in(
        d,
        &["compare", "--baseline", "br.csv", "--candidate", "an.csv"],
    );
    assert!(cmp.status.success());
    let table = stdout_of(&cmp);
    assert!(table.starts_with("loan_id,sigma_c_baseline,sigma_c_candidate,rel_diff\n"));
    assert_eq!(table.lines().count(), 1 + 6);
    assert!(stderr_of(&cmp).contains("max |rel|"));
    // Series at order 12 and pair quadrature should already agree tightly.
    for line in table.lines().skip(1) {
        let rel: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rel.abs() < 1e-4, "analytic vs quadrature mismatch: {line}");
    }

    let conv = run_in(
        d,
        &[
            "converge",
            "--portfolio",
            "pf.txt",
            "--ladder",
            "1e3,4e3",
            "--reference",
            "br.csv",
        ],
    );
    assert!(
        conv.status.success(),
        "converge failed: {}",
        stderr_of(&conv)
    );
    let table = stdout_of(&conv);
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n_scenarios,sigma_rel_diff,sigma_times_sqrt_n"
    );
    assert!(lines.next().unwrap().starts_with("1000,"));
    assert!(lines.next().unwrap().starts_with("4000,"));
    assert!(lines.next().is_none());
}

#[test]
fn exit_codes_separate_usage_data_and_numerics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // Usage errors: unknown subcommand, unknown flag, missing required flag.
    assert_eq!(run_in(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run_in(d, &["allocate", "--nope"]).status.code(), Some(1));
    assert_eq!(run_in(d, &["allocate"]).status.code(), Some(1));
    assert_eq!(run_in(d, &["--help"]).status.code(), Some(0));

    // Data errors: absent file, malformed portfolio, bad config key or value.
    assert_eq!(
        run_in(d, &["allocate", "--portfolio", "absent.txt"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(d.join("mangled.txt"), "[factors]\nn_factors = oops\n").unwrap();
    let bad = run_in(d, &["allocate", "--portfolio", "mangled.txt"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr_of(&bad).contains("line 2"));

    run_in(
        d,
        &[
            "gen",
            "--loans",
            "4",
            "--borrowers",
            "2",
            "--factors",
            "2",
            "--seed",
            "5",
            "--out",
            "pf.txt",
        ],
    );
    std::fs::write(d.join("bad.toml"), "n_maximum = 3\n").unwrap();
    assert_eq!(
        run_in(
            d,
            &["allocate", "--portfolio", "pf.txt", "--config", "bad.toml"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run_in(d, &["allocate", "--portfolio", "pf.txt", "--n-max", "0"])
            .status
            .code(),
        Some(2)
    );

    // Numerical errors: a zero baseline contribution has no relative scale.
    let header = "loan_id,sigma_i,sigma_c,capital_charge\n";
    let zero = format!(
        "{header}LX,{z},{z},\nPORTFOLIO,,{z},\n",
        z = "0.0000000000000000e0"
    );
    std::fs::write(d.join("zero.csv"), &zero).unwrap();
    let cmp = run_in(
        d,
        &[
            "compare",
            "--baseline",
            "zero.csv",
            "--candidate",
            "zero.csv",
        ],
    );
    assert_eq!(cmp.status.code(), Some(3));
}

#[test]
fn validate_and_allocate_share_one_gate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Factor loadings off the unit sphere beyond the renormalization band.
    let text = "[factors]\nn_factors = 2\n[borrowers]\nB1 0.5 1:0.5\n[loans]\nL1 B1 100 1.0 0.01 0.01 0.4\n";
    std::fs::write(d.join("pf.txt"), text).unwrap();
    let val = run_in(d, &["validate", "--portfolio", "pf.txt"]);
    let alloc = run_in(d, &["allocate", "--portfolio", "pf.txt"]);
    assert_eq!(val.status.code(), Some(2));
    assert_eq!(alloc.status.code(), Some(2));
    assert_eq!(stderr_of(&val), stderr_of(&alloc));
    assert!(stderr_of(&val).contains("B1"));
}
