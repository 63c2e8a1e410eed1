use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn memplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memplan")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .map(|rest| rest.trim_start_matches(':').trim())
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_chain3() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("chain3.plan.json");
    let out = memplan(&["plan", path_str(&fixture("chain3.json")), "-o", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(field(&text, "peak_mem"), "6");
    assert_eq!(field(&text, "fragmentation"), "0.0000");
    assert_eq!(field(&text, "sequence"), "v1 v2 v3");
    assert!(out_path.exists());

    let out = memplan(&["validate", path_str(&out_path), path_str(&fixture("chain3.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("valid"));
}

#[test]
fn plan_order4_reports_savings() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.json");
    let out = memplan(&["plan", path_str(&fixture("order4.json")), "-o", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(field(&text, "peak_mem"), "21");
    assert_eq!(field(&text, "program order rs"), "30");
    assert_eq!(field(&text, "savings"), "30.0%");
}

#[test]
fn joint_mode_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.json");
    let out = memplan(&["plan", path_str(&fixture("chain3.json")), "--joint", "-o", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&stdout(&out), "peak_mem"), "6");
}

#[test]
fn joint_and_split_conflict() {
    let out = memplan(&["plan", path_str(&fixture("chain3.json")), "--joint", "--split"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_on_pack3() {
    let out = memplan(&["baseline", path_str(&fixture("pack3.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(field(&text, "mr_peak"), "10");
    assert_eq!(field(&text, "fragmentation"), "0.2000");
    let a = memplan(&["baseline", path_str(&fixture("pack3.json")), "--policy", "best-fit"]);
    let b = memplan(&["baseline", path_str(&fixture("pack3.json")), "--policy", "best-fit"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn export_lp_matches_golden() {
    let out = memplan(&["export-lp", path_str(&fixture("chain3.json")), "--phase", "schedule"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, std::fs::read(fixture("golden/chain3_schedule.lp")).unwrap());
}

#[test]
fn tampered_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.json");
    let graph = fixture("order4.json");
    assert_eq!(memplan(&["plan", path_str(&graph), "-o", path_str(&out_path)]).status.code(), Some(0));
    let mut plan: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    plan["peak_mem"] = serde_json::json!(1);
    std::fs::write(&out_path, serde_json::to_vec_pretty(&plan).unwrap()).unwrap();
    let out = memplan(&["validate", path_str(&out_path), path_str(&graph)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("peak_address"), "{}", stdout(&out));
}

#[test]
fn gen_is_reproducible() {
    let args = ["gen", "--kind", "random", "--layers", "6", "--seed", "11", "--jitter", "3"];
    let (a, b) = (memplan(&args), memplan(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = memplan(&["gen", "--kind", "random", "--layers", "6", "--seed", "12", "--jitter", "3"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"nodes":[{"id":"a","role":"compute"}],"edges":[{"id":"x","source":"zz","sinks":[],"size":1,"kind":"data"}]}"#)
        .unwrap();
    assert_eq!(memplan(&["plan", path_str(&bad)]).status.code(), Some(2));
    assert_eq!(memplan(&["analyze", path_str(&dir.path().join("missing.json"))]).status.code(), Some(2));
}

fn large_graph(dir: &Path) -> PathBuf {
    let path = dir.join("big.json");
    let out = memplan(&["gen", "--kind", "training-like", "--layers", "5", "-o", path_str(&path)]);
    assert_eq!(out.status.code(), Some(0));
    path
}

#[test]
fn large_graph_without_solver_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let big = large_graph(dir.path());
    let out = memplan(&["plan", path_str(&big), "-o", path_str(&dir.path().join("p.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solver_timeout_exits_4_with_a_plan() {
    let dir = tempfile::tempdir().unwrap();
    let big = large_graph(dir.path());
    let plan = dir.path().join("p.json");
    let out = memplan(&[
        "plan",
        path_str(&big),
        "-o",
        path_str(&plan),
        "--solver-cmd",
        "sleep 10",
        "--time-limit",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("WARNING"));
    let check = memplan(&["validate", path_str(&plan), path_str(&big)]);
    assert_eq!(check.status.code(), Some(0), "{}", stdout(&check));
}

#[test]
fn analyze_schedule_place_and_stats_run() {
    let graph = fixture("training_mini.json");
    let g = path_str(&graph);
    for args in [
        vec!["analyze", g],
        vec!["schedule", g, "--oracle"],
        vec!["place", g, "--oracle"],
        vec!["place", g, "--program-order"],
        vec!["stats", g],
    ] {
        let out = memplan(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!stdout(&out).contains("DISAGREES"));
    }
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("s.json");
    let out = memplan(&["schedule", path_str(&fixture("order4.json")), "--json-out", path_str(&json)]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["peak_rs"], 21);
}
