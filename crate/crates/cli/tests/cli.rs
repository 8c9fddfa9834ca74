use std::path::Path;
use std::process::{Command, Output};

fn highreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_highreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_convex_writes_a_clean_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("quartic.jsonl");
    let o = highreg(&[
        "solve-convex",
        "--problem",
        "quartic-box",
        "--p",
        "2",
        "--eps",
        "1e-4",
        "--trace-out",
        path_arg(&trace),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("CriticalityReached"));
    let chi: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("chi"))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(chi <= 1e-4);

    let o = highreg(&["check-trace", path_arg(&trace)]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn edited_sigma_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = highreg(&[
        "solve-convex",
        "--problem",
        "rosenbrock-box",
        "--p",
        "2",
        "--eps",
        "1e-6",
        "--trace-out",
        path_arg(&trace),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let idx = lines
        .iter()
        .position(|l| l.contains("\"arpcc-iter\""))
        .unwrap();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[idx]).unwrap();
    let sigma = rec["sigma_next"].as_f64().unwrap();
    rec["sigma_next"] = serde_json::json!(sigma * 37.0);
    lines[idx] = rec.to_string();
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();

    let o = highreg(&["check-trace", path_arg(&trace)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stdout(&o)
            .lines()
            .any(|l| l.starts_with("FAIL sigma-update")),
        "{}",
        stdout(&o)
    );
}

#[test]
fn empty_trace_passes_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.jsonl");
    std::fs::write(&trace, "").unwrap();
    let o = highreg(&["check-trace", path_arg(&trace)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("warning"));
}

#[test]
fn malformed_trace_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.jsonl");
    std::fs::write(&trace, "{\"kind\": \"arpcc-iter\"\n").unwrap();
    let o = highreg(&["check-trace", path_arg(&trace)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_gamma_is_a_usage_error() {
    let o = highreg(&[
        "solve-convex",
        "--problem",
        "quartic-box",
        "--gamma1",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma1"));
}

#[test]
fn unknown_problem_is_a_usage_error() {
    let o = highreg(&["solve-convex", "--problem", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn circle_gives_scaled_kkt() {
    let o = highreg(&[
        "solve-general",
        "--problem",
        "circle",
        "--eps-p",
        "1e-3",
        "--eps-d",
        "1e-3",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("ScaledKKT"));
    assert!(out.contains("verified     yes"));
}

#[test]
fn infeasible_problem_is_detected() {
    let o = highreg(&["solve-general", "--problem", "infeasible"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("InfeasibleCritical"));
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# quartic run\nproblem = quartic-box\np = 1\neps = 1e-3\n",
    )
    .unwrap();
    let o = highreg(&["solve-convex", "--config", path_arg(&cfg), "--p", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("p = 3"));

    std::fs::write(&cfg, "problem = quartic-box\ngamma2 = 0.5\n").unwrap();
    let o = highreg(&["solve-convex", "--config", path_arg(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_starts_are_reproducible() {
    let a = highreg(&["solve-convex", "--problem", "rosenbrock-box", "--seed", "7"]);
    let b = highreg(&["solve-convex", "--problem", "rosenbrock-box", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn sweep_reports_slope() {
    let o = highreg(&["sweep", "--problem", "quartic-box", "--p", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("within bound"));
    let o = highreg(&["sweep", "--problem", "quartic-box", "--grid", "1e-2,1e-3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_problems_names_the_registry() {
    let o = highreg(&["list-problems"]);
    assert!(o.status.success());
    for name in [
        "quartic-box",
        "rosenbrock-box",
        "circle",
        "infeasible",
        "powell-eq",
    ] {
        assert!(stdout(&o).contains(name));
    }
}
