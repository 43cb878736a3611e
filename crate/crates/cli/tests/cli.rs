use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use minlp_bnp::model::{save_instance, StructuredModel};
use minlp_bnp::problems::{encode_circle_cutting, gen_branching_adversary, CircleCuttingInstance, Rectangle};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_minlp-bnp"));
    for var in ["METHOD", "GAP", "TIME_LIMIT", "PRICING_BUDGET", "WORKERS", "SEED", "OUT"] {
        c.env_remove(format!("MINLP_BNP_{var}"));
    }
    c
}

fn write(dir: &TempDir, name: &str, model: &StructuredModel) -> PathBuf {
    let p = dir.path().join(name);
    save_instance(model, &p).unwrap();
    p
}

fn run(args: &[&str], instance: &Path) -> (Output, Value) {
    let out = bin().args(args).arg(instance).output().unwrap();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out, json)
}

fn one_circle() -> StructuredModel {
    encode_circle_cutting(&CircleCuttingInstance {
        radii: vec![1.0],
        rectangles: vec![Rectangle { width: 2.0, height: 2.0 }],
        seed: 0,
    })
    .unwrap()
}

#[test]
fn single_circle_report() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "one.json", &one_circle());
    let (out, rep) = run(&["solve"], &p);
    assert_eq!(out.status.code(), Some(0));
    assert!((rep["objective"].as_f64().unwrap() - (4.0 - std::f64::consts::PI)).abs() < 1e-4);
    assert_eq!(rep["nodes"], 1);
    assert_eq!(rep["status"], "optimal");
    for key in ["lb", "ub", "gap", "colgen_iterations", "columns_generated", "wallclock_s"] {
        assert!(rep.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn zero_time_limit_exits_2() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "one.json", &one_circle());
    let (out, rep) = run(&["solve", "--time-limit", "0"], &p);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(rep["status"], "limit");
    assert_eq!(rep["lb"], "-inf");
}

#[test]
fn malformed_instance_exits_4() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"name": "x", "blocks": 3}"#).unwrap();
    let (out, _) = run(&["solve"], &p);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed"));
}

#[test]
fn infeasible_instance_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut m = gen_branching_adversary(0);
    m.rhs = vec![3.0];
    let p = write(&dir, "inf.json", &m);
    for method in ["bnp", "enumerate-columns", "fullspace-oracle"] {
        let (out, rep) = run(&["solve", "--method", method], &p);
        assert_eq!(out.status.code(), Some(3), "{method}");
        assert_eq!(rep["status"], "infeasible");
    }
}

#[test]
fn enumeration_matches_bnp_on_generated_instances() {
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        let p = dir.path().join(format!("r{seed}.json"));
        let st = bin()
            .args(["generate", "random-int", "--seed", &seed.to_string(), "--out"])
            .arg(&p)
            .status()
            .unwrap();
        assert!(st.success());
        let (_, a) = run(&["solve", "--gap", "1e-9"], &p);
        let (_, b) = run(&["solve", "--method", "enumerate-columns"], &p);
        let (a, b) = (a["objective"].as_f64().unwrap(), b["objective"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn env_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "adv.json", &gen_branching_adversary(2));
    let out = bin().env("MINLP_BNP_METHOD", "enumerate-columns").arg("solve").arg(&p).output().unwrap();
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["method"], "enumerate-columns");
}

#[test]
fn report_written_to_out() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "adv.json", &gen_branching_adversary(0));
    let report = dir.path().join("report.json");
    let trace = dir.path().join("trace.csv");
    let st = bin()
        .arg("solve")
        .arg(&p)
        .arg("--out")
        .arg(&report)
        .arg("--trace")
        .arg(&trace)
        .status()
        .unwrap();
    assert!(st.success());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["nodes"].as_u64().unwrap() > 1);
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("node,iter,phase"));
}

#[test]
fn workers_do_not_change_results() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("c.json");
    assert!(bin().args(["generate", "circle", "--seed", "4", "--out"]).arg(&p).status().unwrap().success());
    let (_, a) = run(&["solve", "--workers", "1"], &p);
    let (_, b) = run(&["solve", "--workers", "8"], &p);
    for key in ["objective", "lb", "ub", "nodes", "columns_generated", "designs"] {
        assert_eq!(a[key], b[key], "{key}");
    }
}

#[test]
fn compare_adversary_reports_branching() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "adv.json", &gen_branching_adversary(3));
    let out = bin().arg("compare").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("branching exercised: true"), "{text}");
    assert!(text.contains("verdict: consistent"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains("optimal")).count(), 3, "{text}");
}

#[test]
fn compare_circle_refuses_enumeration() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "one.json", &one_circle());
    let out = bin().arg("compare").arg(&p).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("enumerate-columns  refused"), "{text}");
    assert!(text.contains("verdict: consistent"), "{text}");
}

#[test]
fn bad_flags_are_rejected() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "one.json", &one_circle());
    let (out, _) = run(&["solve", "--gap", "0"], &p);
    assert_eq!(out.status.code(), Some(1));
    let (out, _) = run(&["solve", "--workers", "0"], &p);
    assert_eq!(out.status.code(), Some(1));
}
