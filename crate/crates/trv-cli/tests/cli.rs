// SPDX-License-Identifier: Apache-2.0
//! End-to-end CLI tests: exit codes, JSON report shape, and `--dump-smt`
//! determinism. Each test uses the cheapest corpus rule that exercises the
//! relevant path, since every verification hits the SMT solver.

use std::path::PathBuf;
use std::process::Command;

use assert_cmd::prelude::*;
use predicates::prelude::*;

fn corpus(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(file)
}

fn trv() -> Command {
    Command::cargo_bin("trv").unwrap()
}

#[test]
fn verified_rule_exits_zero() {
    trv()
        .args(["verify"])
        .arg(corpus("identity.json"))
        .assert()
        .success()
        .stdout(predicate::str::contains("Identity: verified"));
}

#[test]
fn invalid_rule_exits_one() {
    trv()
        .args(["verify"])
        .arg(corpus("binary-sub-comm.json"))
        .assert()
        .code(1)
        .stdout(predicate::str::contains("BinarySubComm: invalid"));
}

#[test]
fn unknown_rule_exits_two() {
    trv()
        .args(["verify"])
        .arg(corpus("reduce-concat-no-hint.json"))
        .assert()
        .code(2)
        .stdout(predicate::str::contains("reduction without hint"));
}

#[test]
fn tool_error_exits_three() {
    trv()
        .args(["verify", "/nonexistent/rule.json"])
        .assert()
        .code(3)
        .stderr(predicate::str::contains("error"));
}

#[test]
fn malformed_rule_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\"").unwrap();
    trv().args(["verify"]).arg(&bad).assert().code(3);
}

#[test]
fn json_report_round_trips() {
    let out = trv()
        .args(["verify", "--format", "json"])
        .arg(corpus("identity.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: trv_cli::report::Report =
        serde_json::from_slice(&out.stdout).expect("report parses");
    assert_eq!(report.rules.len(), 1);
    assert_eq!(report.rules[0].name, "Identity");
    assert_eq!(report.rules[0].verdict, "verified");
    assert_eq!(report.rules[0].tasks.len(), 1);
    // Round trip: serialize again and re-parse to the same value.
    let again = serde_json::to_string(&report).unwrap();
    let report2: trv_cli::report::Report = serde_json::from_str(&again).unwrap();
    assert_eq!(report, report2);
}

#[test]
fn bounds_reports_inferred_bounds() {
    let out = trv()
        .args(["bounds", "--format", "json"])
        .arg(corpus("pad-low-combine.json"))
        .arg(corpus("dyslice-to-slice.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rules = v["rules"].as_array().unwrap();
    assert_eq!(rules[0]["rule"], "PadLowCombine");
    assert_eq!(rules[0]["rclasses"][0]["bound"], 2);
    assert_eq!(rules[1]["rule"], "DysliceToSlice");
    assert_eq!(rules[1]["rclasses"][0]["bound"], 1);
}

#[test]
fn dump_smt_is_byte_identical_across_runs() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        trv()
            .args(["verify", "--seed", "7", "--dump-smt"])
            .arg(d.path())
            .arg(corpus("pad-low-combine.json"))
            .assert()
            .success();
    }
    let mut files: Vec<PathBuf> = walk(d1.path());
    files.sort();
    assert!(!files.is_empty(), "no dumped scripts");
    for f in &files {
        let rel = f.strip_prefix(d1.path()).unwrap();
        let other = d2.path().join(rel);
        let a = std::fs::read(f).unwrap();
        let b = std::fs::read(&other).unwrap_or_else(|_| panic!("missing {rel:?} in second run"));
        assert_eq!(a, b, "dumped script {rel:?} differs between runs");
    }
}

fn walk(dir: &std::path::Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn fuzz_finds_mutant_mismatch() {
    trv()
        .args(["fuzz", "--trials", "500"])
        .arg(corpus("binary-sub-comm.json"))
        .assert()
        .code(1)
        .stdout(predicate::str::contains("MISMATCH"));
}

#[test]
fn fuzz_accepts_valid_rule() {
    trv()
        .args(["fuzz", "--trials", "100"])
        .arg(corpus("pad-low-combine.json"))
        .assert()
        .success()
        .stdout(predicate::str::contains("ok"));
}

#[test]
fn max_rank_override_marks_non_conclusive() {
    let out = trv()
        .args(["verify", "--format", "json", "--max-rank-override", "c=1"])
        .arg(corpus("pad-low-combine.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rules"][0]["non_conclusive"], true);
    assert_eq!(v["rules"][0]["tasks"].as_array().unwrap().len(), 1);
}
