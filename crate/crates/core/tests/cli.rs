use std::path::{Path, PathBuf};

use mvhedge::cli::{self, HedgeSummary};
use mvhedge::fmt::to_json_string;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["mvhedge"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

const BINOMIAL_CALL: &str = r#"{"model":{"builder":"binomial","s0":[10],"up":1.1,"down":0.9,"p_up":0.6,"periods":1},
 "claim":{"kind":"call","strike":10}}"#;
const TRINOMIAL_CALL: &str = r#"{"model":{"builder":"iid","s0":[10],"periods":1,
 "increments":[{"delta":[1],"p":0.3},{"delta":[0],"p":0.4},{"delta":[-1],"p":0.3}]},
 "claim":{"kind":"call","strike":10},"v0":0.3}"#;
const DRIFTED: &str = r#"{"model":{"builder":"iid","s0":[10],"periods":4,
 "increments":[{"delta":[1.2],"p":0.35},{"delta":[0.1],"p":0.4},{"delta":[-0.9],"p":0.25}]},
 "claim":{"kind":"call","strike":10.5}}"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tree_build_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "b.json",
        r#"{"model":{"builder":"binomial","s0":[10],"up":1.1,"down":0.9,"p_up":0.5,"periods":3}}"#,
    );
    let r = run(&["tree", "build", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.starts_with("nodes=15 leaves=8"));
    let text = std::fs::read_to_string(dir.path().join("tree.json")).unwrap();
    let (tree, claim) = mvhedge::ScenarioTree::from_json(&text).unwrap();
    assert_eq!(tree.len(), 15);
    assert!(claim.is_none());

    let cfg = config(
        dir.path(),
        "t.json",
        r#"{"model":{"builder":"iid","s0":[10],"periods":2,
            "increments":[{"delta":[1],"p":0.3},{"delta":[0],"p":0.4},{"delta":[-1],"p":0.3}]}}"#,
    );
    let r = run(&["tree", "build", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(r.stdout.starts_with("nodes=13 leaves=9"));
}

#[test]
fn tree_build_rejects_bad_parameters() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "bad.json",
        r#"{"model":{"builder":"iid","s0":[10],"periods":2,
            "increments":[{"delta":[1],"p":-0.3},{"delta":[0],"p":1.3}]}}"#,
    );
    let r = run(&["tree", "build", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("increments"), "{}", r.stderr);

    let cfg = config(
        dir.path(),
        "unknown.json",
        r#"{"model":{"builder":"binomial","s0":[10],"up":1.1,"down":0.9,"p_up":0.5,"periods":3},"colour":1}"#,
    );
    assert_eq!(run(&["tree", "build", "--config", s(&cfg)]).code, 2);
    let cfg = config(
        dir.path(),
        "unknown2.json",
        r#"{"model":{"builder":"random","periods":2,"num_assets":1,"max_branching":3,"seed":1,"extra":0}}"#,
    );
    assert_eq!(run(&["tree", "build", "--config", s(&cfg)]).code, 2);
}

#[test]
fn hedge_complete_and_martingale() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "b.json", BINOMIAL_CALL);
    let r = run(&[
        "hedge",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--v0",
        "auto",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary: HedgeSummary = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("hedge_summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary.total_error.abs() < 1e-12);
    assert!((summary.v0 - 0.5).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("hedge_nodes.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("id,time,V,xi_0,e"));
    assert_eq!(csv.lines().count(), 4);

    let cfg = config(dir.path(), "t.json", TRINOMIAL_CALL);
    let r = run(&["hedge", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(r.code, 0);
    let summary: HedgeSummary = serde_json::from_str(&r.stdout).unwrap();
    assert!((summary.total_error - 0.06).abs() < 1e-12);
    assert_eq!(summary.v0, 0.3);
}

#[test]
fn hedge_degenerate_exit_code() {
    let dir = TempDir::new().unwrap();
    let tree = r#"{"num_assets":1,"horizon":1,"nodes":[
        {"id":0,"time":0,"price":[10],"parent":null,"children":[{"id":1,"p":1}]},
        {"id":1,"time":1,"price":[11],"parent":0,"children":[]}],"claim":[1]}"#;
    std::fs::write(dir.path().join("degenerate.json"), tree).unwrap();
    let cfg = config(
        dir.path(),
        "d.json",
        r#"{"model":{"builder":"file","path":"degenerate.json"}}"#,
    );
    let r = run(&["hedge", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("node 0"), "{}", r.stderr);
}

#[test]
fn verify_random_trinomial_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "r.json",
        r#"{"model":{"builder":"random","periods":3,"num_assets":1,"min_branching":3,"max_branching":3,"seed":7},
            "claim":{"kind":"call","strike":10}}"#,
    );
    let r = run(&["verify", "--config", s(&cfg)]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    for line in r.stdout.lines().filter(|l| l.starts_with("CHECK")) {
        assert!(line.ends_with("PASS"));
        assert!(line.contains(" node=") && line.contains(" engine=") && line.contains(" rel_err="));
    }
}

#[test]
fn verify_detects_tampered_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "h.json", DRIFTED);
    assert_eq!(
        run(&["hedge", "--config", s(&cfg), "--out", s(dir.path())]).code,
        0
    );
    let path = dir.path().join("hedge_summary.json");
    let verify_cfg = config(
        dir.path(),
        "v.json",
        &DRIFTED.replace("}}", "},\"engine_summary\":\"hedge_summary.json\"}"),
    );
    let r = run(&["verify", "--config", s(&verify_cfg)]);
    assert_eq!(r.code, 0, "{}", r.stdout);

    let mut summary: HedgeSummary =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    summary.l0 += 1e-3;
    std::fs::write(&path, to_json_string(&summary).unwrap()).unwrap();
    let r = run(&["verify", "--config", s(&verify_cfg)]);
    assert_eq!(r.code, 1);
    assert!(r
        .stdout
        .lines()
        .any(|l| l.starts_with("CHECK qp_second_moment") && l.ends_with("FAIL")));
}

#[test]
fn verify_size_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "big.json",
        r#"{"model":{"builder":"iid","s0":[10],"periods":7,
            "increments":[{"delta":[1],"p":0.3},{"delta":[0],"p":0.4},{"delta":[-1],"p":0.3}]},
            "claim":{"kind":"call","strike":10}}"#,
    );
    assert_eq!(run(&["verify", "--config", s(&cfg)]).code, 4);
}

#[test]
fn backtest_exact_ranks_mvh_first() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "d.json", DRIFTED);
    let r = run(&[
        "backtest",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--exact",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(dir.path().join("backtest.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "mvh");
    let mvh: f64 = rows[0][2].parse().unwrap();
    for row in &rows[1..] {
        assert!(row[2].parse::<f64>().unwrap() > mvh);
        assert!(row[5].parse::<f64>().unwrap() > 1.0);
    }
    assert!(dir.path().join("backtest.json").exists());
}

#[test]
fn backtest_sampled_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "d.json", DRIFTED);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let r = run(&[
            "backtest",
            "--config",
            s(&cfg),
            "--out",
            s(out),
            "--seed",
            "11",
            "--paths",
            "5000",
        ]);
        assert_eq!(r.code, 0);
    }
    let fa = std::fs::read(a.join("backtest.csv")).unwrap();
    assert_eq!(fa, std::fs::read(b.join("backtest.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("backtest.json")).unwrap(),
        std::fs::read(b.join("backtest.json")).unwrap()
    );
}

#[test]
fn backtest_markowitz_on_call_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "m.json",
        &DRIFTED.replace("}}", "},\"strategies\":[\"markowitz\"]}"),
    );
    let r = run(&[
        "backtest",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--exact",
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("constant claim"));
}

#[test]
fn inspect_fields() {
    let dir = TempDir::new().unwrap();
    let mart = config(
        dir.path(),
        "m.json",
        r#"{"model":{"builder":"iid","s0":[10],"periods":2,
            "increments":[{"delta":[1],"p":0.3},{"delta":[0],"p":0.4},{"delta":[-1],"p":0.3}]}}"#,
    );
    let r = run(&["inspect", "L", "--config", s(&mart)]);
    assert_eq!(r.code, 0);
    let rows: Vec<&str> = r.stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 13);
    assert!(rows.iter().all(|l| l.ends_with(",1")));

    let bin = config(
        dir.path(),
        "b.json",
        r#"{"model":{"builder":"iid","s0":[10],"periods":1,"increments":[{"delta":[1],"p":0.6},{"delta":[-1],"p":0.4}]}}"#,
    );
    let r = run(&["inspect", "sharpe", "--config", s(&bin)]);
    let root: f64 = r
        .stdout
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((root - 0.204124).abs() < 1e-6);

    for field in ["a", "mvt", "qstar", "opportunity"] {
        assert_eq!(run(&["inspect", field, "--config", s(&bin)]).code, 0);
    }
    assert_eq!(run(&["inspect", "V", "--config", s(&bin)]).code, 2);
    assert_eq!(run(&["inspect", "foo", "--config", s(&bin)]).code, 2);
}

#[test]
fn commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "d.json", DRIFTED);
    let a = run(&[
        "hedge",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("a")),
    ]);
    let b = run(&[
        "hedge",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        std::fs::read(dir.path().join("a/hedge_nodes.csv")).unwrap(),
        std::fs::read(dir.path().join("b/hedge_nodes.csv")).unwrap()
    );
}
