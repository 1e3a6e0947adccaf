//! CLI acceptance: byte-identical reports and tables across repeated runs
//! with the same seed, exit-code classes, and end-to-end agreement with the
//! library.

use std::path::PathBuf;
use std::process::Command;

use snstat_cli::run_command;

fn temp_dir() -> PathBuf {
    let dir = std::env::temp_dir().join("snstat_cli_acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// A deterministic pseudo-normal sample written as CSV.
fn write_sample(name: &str, n: usize, seed: u64) -> PathBuf {
    use rand_distr::Distribution;
    let mut rng = snstat::rng::rng_from_seed(seed);
    let mut text = String::new();
    for _ in 0..n {
        let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
        text.push_str(&format!("{z}\n"));
    }
    let path = temp_dir().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let mut argv = vec!["snstat"];
    argv.extend_from_slice(args);
    run_command(argv).unwrap_or_else(|e| panic!("{args:?} failed: {}", e.message()))
}

fn run_err(args: &[&str]) -> snstat_cli::CliError {
    let mut argv = vec!["snstat"];
    argv.extend_from_slice(args);
    run_command(argv).expect_err("command should fail")
}

#[test]
fn criterion_09_determinism() {
    let input = write_sample("det.csv", 300, 1);
    let input = input.to_str().unwrap();
    let table_a = temp_dir().join("det_a.cvt");
    let table_b = temp_dir().join("det_b.cvt");

    // Identical build-table runs produce byte-identical files and reports.
    let build = |out: &PathBuf| {
        run_ok(&[
            "build-table",
            "--functional",
            "sn",
            "--p",
            "1",
            "--grid",
            "200",
            "--reps",
            "10000",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let report_a = build(&table_a);
    let report_b = build(&table_b);
    let bytes_a = std::fs::read(&table_a).unwrap();
    let bytes_b = std::fs::read(&table_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "table files must be byte-identical");
    // The reports differ only in the output path they echo.
    let strip = |r: &str| {
        r.lines()
            .filter(|l| !l.starts_with("written"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&report_a), strip(&report_b));

    // Every randomized or table-driven command repeats byte-identically.
    let table = table_a.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "sn-test", "--input", input, "--theta0", "0", "--table", table, "--alpha", "0.05",
        ],
        vec!["sn-ci", "--input", input, "--table", table],
        vec![
            "bootstrap", "--input", input, "--kind", "sn", "--theta0", "0", "--reps", "200",
            "--seed", "7",
        ],
        vec![
            "bootstrap", "--input", input, "--kind", "fixedb", "--theta0", "0", "--b", "0.2",
            "--multipliers", "rademacher", "--reps", "150", "--seed", "9",
        ],
        vec![
            "simulate-limits", "--functional", "fixedb", "--b", "0.1", "--grid", "200", "--reps",
            "10000", "--seed", "3",
        ],
        vec!["demo-counterexample", "--seed", "5"],
        vec!["check-identity", "--input", input, "--pairs", "3000", "--seed", "11"],
        vec!["fixedb-pvalue", "--input", input, "--theta0", "0.05", "--b", "0.1"],
    ];
    for case in &cases {
        let first = run_ok(case);
        let second = run_ok(case);
        assert_eq!(first, second, "non-deterministic report for {case:?}");
        assert!(!first.is_empty());
    }
    println!(
        "ACCEPTANCE 09 determinism: PASS ({} commands repeated byte-identically, tables byte-identical)",
        cases.len() + 1
    );
}

#[test]
fn cli_end_to_end_matches_library() {
    let input = write_sample("e2e.csv", 400, 2);
    let table_path = temp_dir().join("e2e_sn.cvt");
    run_ok(&[
        "build-table",
        "--functional",
        "sn",
        "--p",
        "1",
        "--grid",
        "300",
        "--reps",
        "20000",
        "--seed",
        "13",
        "--out",
        table_path.to_str().unwrap(),
    ]);

    let report = run_ok(&[
        "sn-test",
        "--input",
        input.to_str().unwrap(),
        "--theta0",
        "0",
        "--table",
        table_path.to_str().unwrap(),
    ]);

    // The reported statistic equals a direct library evaluation.
    let bytes = std::fs::read_to_string(&input).unwrap();
    let values: Vec<f64> = bytes.lines().map(|l| l.parse().unwrap()).collect();
    let ts = snstat::TimeSeries::from_column(values).unwrap();
    let expect = snstat::selfnorm::sn_statistic(&ts, &snstat::Functional::Mean, &[0.0])
        .unwrap()
        .statistic;
    let reported: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("statistic = "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(reported, expect);

    // The reported p-value is consistent with the persisted table.
    let table = snstat::table::CriticalValueTable::read(&table_path).unwrap();
    let (cdf, _) = table.cdf_at(expect);
    let p: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("p_value = "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(p, 1.0 - cdf);
    println!("CLI end-to-end: PASS (statistic {expect:.4}, p-value {p:.4})");
}

#[test]
fn cli_demo_value() {
    let report = run_ok(&["demo-counterexample", "--n", "16"]);
    assert!(
        report.contains("value 16 = 7.75"),
        "unexpected demo output:\n{report}"
    );
}

#[test]
fn cli_gsn_requires_matching_table() {
    let input = write_sample("gsn.csv", 200, 3);
    let table_path = temp_dir().join("gsn_grid6.cvt");
    run_ok(&[
        "build-table",
        "--functional",
        "gsn",
        "--H",
        "grid:6",
        "--p",
        "1",
        "--grid",
        "200",
        "--reps",
        "10000",
        "--seed",
        "17",
        "--out",
        table_path.to_str().unwrap(),
    ]);
    // Matching measure: works.
    let report = run_ok(&[
        "gsn-test",
        "--input",
        input.to_str().unwrap(),
        "--theta0",
        "0",
        "--H",
        "grid:6",
        "--table",
        table_path.to_str().unwrap(),
    ]);
    assert!(report.contains("statistic = "));
    // Different measure: refused with a configuration error.
    let err = run_err(&[
        "gsn-test",
        "--input",
        input.to_str().unwrap(),
        "--theta0",
        "0",
        "--H",
        "grid:7",
        "--table",
        table_path.to_str().unwrap(),
    ]);
    assert_eq!(err.exit_code(), 4, "{}", err.message());

    // The recursive measure reproduces the classical statistic and uses the
    // sn table.
    let sn_table = temp_dir().join("gsn_sn.cvt");
    run_ok(&[
        "build-table",
        "--functional",
        "sn",
        "--p",
        "1",
        "--grid",
        "200",
        "--reps",
        "10000",
        "--seed",
        "23",
        "--out",
        sn_table.to_str().unwrap(),
    ]);
    let gsn_report = run_ok(&[
        "gsn-test",
        "--input",
        input.to_str().unwrap(),
        "--theta0",
        "0",
        "--H",
        "recursive",
        "--table",
        sn_table.to_str().unwrap(),
    ]);
    let sn_report = run_ok(&[
        "sn-test",
        "--input",
        input.to_str().unwrap(),
        "--theta0",
        "0",
        "--table",
        sn_table.to_str().unwrap(),
    ]);
    let stat = |r: &str| -> f64 {
        r.lines()
            .find_map(|l| l.strip_prefix("statistic = "))
            .unwrap()
            .parse()
            .unwrap()
    };
    let (a, b) = (stat(&gsn_report), stat(&sn_report));
    assert!(
        (a - b).abs() <= 1e-10 * b.abs().max(1.0),
        "recursive gsn {a} vs classical sn {b}"
    );
}

#[test]
fn cli_exit_code_classes() {
    // Usage error.
    let err = run_err(&["sn-test", "--no-such-flag"]);
    assert_eq!(err.exit_code(), 2);

    // Ingestion error: ragged csv.
    let ragged = temp_dir().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    let table = temp_dir().join("unused.cvt");
    let err = run_err(&[
        "check-identity",
        "--input",
        ragged.to_str().unwrap(),
    ]);
    assert_eq!(err.exit_code(), 3, "{}", err.message());

    // Configuration error: missing table file.
    let input = write_sample("codes.csv", 120, 4);
    let err = run_err(&[
        "sn-test",
        "--input",
        input.to_str().unwrap(),
        "--theta0",
        "0",
        "--table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(err.exit_code(), 4, "{}", err.message());
    assert!(
        err.message().contains("build-table"),
        "missing-table error should point at build-table: {}",
        err.message()
    );

    // Numerical error: change-point test on a constant series.
    let constant = temp_dir().join("constant.csv");
    std::fs::write(&constant, "5\n".repeat(50)).unwrap();
    // Build a small cp table first so the failure is the statistic itself.
    let cp_table = temp_dir().join("codes_cp.cvt");
    run_ok(&[
        "build-table",
        "--functional",
        "cp",
        "--p",
        "1",
        "--grid",
        "150",
        "--reps",
        "10000",
        "--seed",
        "19",
        "--out",
        cp_table.to_str().unwrap(),
    ]);
    let err = run_err(&[
        "cp-test",
        "--input",
        constant.to_str().unwrap(),
        "--table",
        cp_table.to_str().unwrap(),
    ]);
    assert_eq!(err.exit_code(), 5, "{}", err.message());
}

#[test]
fn binary_usage_error_exit_code() {
    // The installed binary must distinguish usage errors (clap exits 2).
    let exe = env!("CARGO_BIN_EXE_snstat");
    let out = Command::new(exe)
        .arg("sn-test")
        .arg("--definitely-not-a-flag")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(exe)
        .args(["demo-counterexample", "--n", "16", "--seed", "1"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("value 16 = 7.75"));
    // Timing diagnostics stay out of the report stream.
    assert!(!stdout.contains("timing_ms"));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("timing_ms"));
}
