//! End-to-end tests of the `slprove` binary: exit codes, the JSON report
//! schema, and determinism of repeated runs.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slprove"))
}

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Writes `text` to a scratch file and returns its path.
fn scratch(name: &str, text: &str) -> String {
    let path = std::env::temp_dir().join(format!("slprove-cli-{}-{}", std::process::id(), name));
    std::fs::write(&path, text).expect("write scratch input");
    path.to_string_lossy().into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const ALL_VALID: &str = r"
    sort node { addr next };
    pred ls(x, y) := emp & x = y \/ exists u. x->node{u} * ls(u, y);
    name refl: checkentail ls(x, y) |- ls(x, y);
    name cell: checkentail x->node{u} |- exists y. ls(x, y);
";

#[test]
fn exit_zero_when_everything_proves() {
    let file = scratch("valid.sl", ALL_VALID);
    let out = bin().arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stdout: {}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("refl") && text.contains("cell"));
    assert!(text.contains("proved 2 / total 2"), "summary line present");
}

#[test]
fn exit_one_when_some_query_is_unknown() {
    let out = bin().arg(corpus("motivating.sl")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("Unknown"));
}

#[test]
fn exit_two_on_missing_file_parse_error_and_bad_flag() {
    let out = bin().arg("/nonexistent.sl").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let bad = scratch("parse-error.sl", "pred oops(x) := emp &&& ;");
    let out = bin().arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let file = scratch("valid2.sl", ALL_VALID);
    let out = bin()
        .args([&file, "--pure-solver", "magic"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_three_when_the_oracle_refutes_a_valid_verdict() {
    // `n + 1` can leave the bounded integer range, so the bound-4 oracle
    // refutes this entailment even though it holds over the integers; that
    // mismatch is exactly what the soundness-violation exit code reports
    let input = r"
        sort node { addr next };
        pred lsn(x, y, n) :=
          emp & x = y & n = 0
          \/ exists u. x->node{u} * lsn(u, y, n - 1) & n >= 1;
        name cons: checkentail x->node{u} * lsn(u, y, n) & n >= 0 |- lsn(x, y, n + 1);
    ";
    let file = scratch("violation.sl", input);
    let out = bin()
        .args([&file, "--check-oracle", "4", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stdout: {} stderr: {}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    let reports: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(reports[0]["oracle"]["result"], "soundness-violation");
    assert!(
        reports[0]["oracle"]["counter_model"].is_object()
            || reports[0]["oracle"]["counter_model"].is_string()
    );
}

#[test]
fn json_report_has_the_stable_key_set_in_input_order() {
    let out = bin()
        .args([
            &corpus("motivating.sl"),
            "--format",
            "json",
            "--trace",
            "--check-oracle",
            "2",
        ])
        .output()
        .unwrap();
    let reports: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let arr = reports.as_array().expect("JSON array");
    assert_eq!(arr.len(), 12);

    let expected_keys = [
        "name",
        "verdict",
        "time_ms",
        "rule_counts",
        "hypotheses_recorded",
        "hypotheses_applied",
        "oracle",
        "tree",
    ];
    for r in arr {
        let obj = r.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        let mut want = expected_keys.to_vec();
        want.sort_unstable();
        assert_eq!(keys, want, "stable JSON key set");
    }
    // report order follows input order regardless of completion order
    let names: Vec<&str> = arr.iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(&names[..5], &["E", "E1", "E2", "E3", "E4"]);
    // traces attach only to Valid verdicts
    for r in arr {
        let valid = r["verdict"] == "Valid";
        assert_eq!(r["tree"].is_null(), !valid, "{}", r["name"]);
        assert_eq!(r["rule_counts"].as_object().unwrap().is_empty(), !valid);
    }
}

#[test]
fn repeated_runs_are_identical_up_to_wall_time() {
    let strip_times = |v: &mut serde_json::Value| {
        for r in v.as_array_mut().unwrap() {
            r["time_ms"] = 0.into();
        }
    };
    let run = || -> serde_json::Value {
        let out = bin()
            .args([&corpus("segments.sl"), "--format", "json", "--trace"])
            .output()
            .unwrap();
        serde_json::from_str(&stdout(&out)).unwrap()
    };
    let (mut a, mut b) = (run(), run());
    strip_times(&mut a);
    strip_times(&mut b);
    assert_eq!(a, b, "identical inputs and flags yield identical reports");
}

#[test]
fn single_path_flag_still_proves_the_corpus() {
    let out = bin()
        .args([&corpus("lseven.sl"), "--single-path"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "invalid queries stay Unknown");
    assert!(stdout(&out).contains("proved 4 / total 8"));
}
