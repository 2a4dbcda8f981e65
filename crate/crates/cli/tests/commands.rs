mod common;

use common::{analyze, fixture, imk, stage, write_preset};

fn code(args: &[&str]) -> i32 {
    imk(args).status.code().unwrap()
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (ecoli, _) = write_preset(dir.path(), "ecoli");
    assert_eq!(code(&["check", ecoli.to_str().unwrap()]), 0);
    assert_eq!(code(&["check", fixture("noniform.json").to_str().unwrap()]), 1);
    assert_eq!(code(&["check", fixture("bad.json").to_str().unwrap()]), 2);
    assert_eq!(code(&["check", dir.path().join("missing.json").to_str().unwrap()]), 2);
}

#[test]
fn noniform_report_names_relative_degree() {
    let out = imk(&["check", fixture("noniform.json").to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stage(&report, "relative_degree")["grade"], "Failed");
    assert_eq!(report["grade"], "Failed");
    assert_eq!(report["exit_code"], 1);
}

#[test]
fn nonadapting_plant_skips_internal_model() {
    let dir = tempfile::tempdir().unwrap();
    let (_, exo) = write_preset(dir.path(), "ecoli");
    let report_path = dir.path().join("r.json");
    let out = imk(&[
        "analyze",
        fixture("nonadapting.json").to_str().unwrap(),
        exo.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report_path).unwrap()).unwrap();
    assert_eq!(stage(&report, "adaptation")["grade"], "Failed");
    assert_eq!(stage(&report, "internal_model")["status"], "skipped");
}

#[test]
fn unknown_example_is_invalid_input() {
    assert_eq!(code(&["example", "nope"]), 2);
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (mut ra, _) = analyze(a.path(), "ecoli", &["--seed", "7"]);
    let (mut rb, _) = analyze(b.path(), "ecoli", &["--seed", "7"]);
    ra.as_object_mut().unwrap().remove("timestamp");
    rb.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (sys, exo) = write_preset(dir.path(), "linear-harmonic");
    let run = |threads: &str| {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_imk"))
            .env("IMK_THREADS", threads)
            .args(["analyze", sys.to_str().unwrap(), exo.to_str().unwrap()])
            .output()
            .unwrap();
        let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn traces_are_written_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let (_, code) = analyze(dir.path(), "ecoli", &["--trace-dir", traces.to_str().unwrap()]);
    assert_eq!(code, 0);
    for k in 1..=3 {
        let csv = std::fs::read_to_string(traces.join(format!("trial_{k}.csv"))).unwrap();
        assert!(csv.starts_with("t,x1,x2,w1,u,y\n"));
    }
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (sys, exo) = write_preset(dir.path(), "ecoli");
    let out = dir.path().join("t.csv");
    let args = ["simulate", sys.to_str().unwrap(), exo.to_str().unwrap(), "--x0", "1,1", "--w0", "2", "--horizon", "5"];
    assert_eq!(code(&[&args[..], &["--out", out.to_str().unwrap()]].concat()), 0);
    let text = std::fs::read_to_string(out).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 5.0);
    assert_eq!(last[3], 2.0);
    assert_eq!(code(&[&args[..6], &["--w0", "1,2"]].concat()), 2);
}

#[test]
fn embed_negative_fixture_fails_property() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("e.json");
    std::fs::write(&input, r#"{"schema_version":1,"Q":[[0.0]],"theta":[1.0],"F":[[-1.0]],"phi":[1.0]}"#).unwrap();
    let out = imk(&["embed", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["failure"]["stage"], "embedding");
}

#[test]
fn extract_im_reports_linear_model() {
    let dir = tempfile::tempdir().unwrap();
    let (sys, exo) = write_preset(dir.path(), "linear-integrator");
    let out = imk(&["extract-im", sys.to_str().unwrap(), exo.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stage(&report, "linear_internal_model")["result"]["p0"], "s + 3");
    assert_eq!(stage(&report, "embedding")["result"]["phi"], serde_json::json!([8.0, 2.0]));
}
