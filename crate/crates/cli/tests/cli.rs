use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_transient-queue"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["simulate", "mm1-exact", "renewal", "busy-period", "fit-rate", "compare"] {
        assert!(text.contains(cmd), "{cmd} missing from --help");
    }
}

#[test]
fn mm1_exact_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.csv");
    let out = run(&["mm1-exact", "--lambda", "0.5", "--mu", "1", "--t-max", "80", "--step", "0.1", "-o", p(&out_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,phi_exact,phi_paper_literal,phi_asymptotic,abs_gap"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 801);
    let last = &rows[800];
    assert!((last[0] - 80.0).abs() < 1e-12);
    assert!((last[1] - 1.0).abs() < 1e-2);
    assert!((last[2] - last[1] - 0.5).abs() < 1e-2);
    assert!((last[4] - (last[1] - 1.0).abs()).abs() < 1e-15);
    // the only file left behind is the output itself
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn unstable_load_exits_two_and_names_rho() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.csv");
    let out = run(&[
        "simulate", "--lambda", "2", "--service", "exp:rate=1", "--t-max", "5", "--step", "0.1", "--reps", "10",
        "--seed", "1", "-o", p(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("rho"), "{msg}");
    assert_eq!(msg.trim().lines().count(), 1);
    assert!(!out_path.exists());
}

#[test]
fn validation_failures_exit_two() {
    let cases: [&[&str]; 4] = [
        &["simulate", "--lambda", "0.5", "--service", "gamma:k=2", "--t-max", "5", "--step", "0.1", "--reps", "1", "--seed", "1", "-o", "x.csv"],
        &["mm1-exact", "--lambda", "0.5", "--mu", "1", "--t-max", "5", "--step", "0.1", "--bogus", "-o", "x.csv"],
        &["simulate", "--lambda", "0.5", "--service", "exp:rate=1", "--t-max", "5", "--step", "0.1", "--reps", "10", "-o", "x.csv"],
        &["busy-period", "--lambda", "0.5", "--service", "exp:rate=1", "--s-grid", "1:0", "-o", "x.csv"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
    let out = run(&["mm1-exact", "--lambda", "0.5", "--mu", "1", "--t-max", "5", "--step", "-0.1", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("step"), "{}", stderr(&out));
}

#[test]
fn computational_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("flat.csv");
    fs::write(&curve, "t,value\n0,1\n1,1\n2,1\n3,1\n").unwrap();
    let out = run(&["fit-rate", "--input", p(&curve), "--phi-inf", "1", "--window", "0:3", "--model", "pure"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn simulate_is_reproducible_and_summarised() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = run(&[
            "simulate", "--lambda", "0.5", "--service", "exp:rate=1", "--t-max", "10", "--step", "0.1", "--reps",
            "5000", "--seed", "42", "-o", p(&path),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let summary = json(&out);
        for key in ["model", "seed", "replications", "phi_stationary_estimate", "stderr"] {
            assert!(summary.get(key).is_some(), "{key}");
        }
        assert_eq!(summary["seed"], 42);
        files.push(fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert!(String::from_utf8_lossy(&files[0]).starts_with("t,value,stderr\n"));
}

#[test]
fn fit_rate_defaults_phi_inf_from_model_flags() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("mm1.csv");
    let out = run(&["mm1-exact", "--lambda", "0.5", "--mu", "1", "--t-max", "100", "--step", "0.1", "-o", p(&curve)]);
    assert!(out.status.success());
    let before = fs::read(&curve).unwrap();

    let explicit = run(&["fit-rate", "--input", p(&curve), "--phi-inf", "1", "--window", "40:100", "--model", "sqrt"]);
    let derived = run(&[
        "fit-rate", "--input", p(&curve), "--window", "40:100", "--model", "sqrt", "--lambda", "0.5", "--service",
        "exp:rate=1",
    ]);
    assert!(explicit.status.success() && derived.status.success(), "{}", stderr(&derived));
    let (a, b) = (json(&explicit), json(&derived));
    assert_eq!(a["rate"], b["rate"]);
    assert!((b["theoretical_rate"].as_f64().unwrap() - 0.085_786_437_626_904_9).abs() < 1e-12);

    let gap = run(&["fit-rate", "--input", p(&curve), "--column", "abs_gap", "--phi-inf", "0", "--window", "40:100", "--model", "sqrt"]);
    assert!(gap.status.success());
    assert!((json(&gap)["rate"].as_f64().unwrap() - a["rate"].as_f64().unwrap()).abs() < 1e-9);

    let missing = run(&["fit-rate", "--input", p(&curve), "--window", "40:100"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("phi-inf"));
    assert_eq!(fs::read(&curve).unwrap(), before);
}

#[test]
fn busy_period_marks_divergence_and_reports_abscissa() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("busy.csv");
    let out = run(&[
        "busy-period", "--lambda", "0.5", "--service", "exp:rate=1", "--s-grid=-0.1:1:0.05", "--abscissa", "-o", p(&path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&out);
    assert!((report["busy_abscissa"].as_f64().unwrap() - 0.085_786_437_6).abs() < 1e-8);
    assert_eq!(report["busy_mean"], 2.0);
    let text = fs::read_to_string(&path).unwrap();
    let rows: Vec<(f64, &str)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s.parse().unwrap(), v)
        })
        .collect();
    assert_eq!(rows.len(), 23);
    for (s, v) in rows {
        assert_eq!(v == "inf", s < -0.085_786_44, "s = {s}: {v}");
    }
}

#[test]
fn renewal_writes_phi_and_components() {
    let dir = tempfile::tempdir().unwrap();
    let (phi, parts) = (dir.path().join("phi.csv"), dir.path().join("parts.csv"));
    let out = run(&[
        "renewal", "--lambda", "0.5", "--service", "det:value=1", "--t-max", "15", "--step", "0.05", "--reps", "20000",
        "--seed", "9", "-o", p(&phi), "--components", p(&parts),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let header = fs::read_to_string(&parts).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,cycle_cdf,q,q_stderr,renewal_function");
    let last: Vec<f64> = fs::read_to_string(&phi)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    // M/D/1 with rho = 0.5 settles at 0.5
    assert!((last[1] - 0.5).abs() < 5.0 * last[2] + 0.01, "{last:?}");
}

#[test]
fn compare_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "compare", "--lambda", "0.5", "--service", "exp:rate=1", "--t-max", "40", "--step", "0.1", "--reps", "20000",
        "--seed", "5", "-o", p(&path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["model", "methods", "max_z", "max_rel_gap", "fit"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert_eq!(report["methods"].as_array().unwrap().len(), 3);
    for key in ["rate", "theoretical_rate", "rel_err"] {
        assert!(report["fit"].get(key).is_some(), "{key}");
    }
}
