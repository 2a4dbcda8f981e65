//! Golden reports for the built-in presets. Regenerate with `IMK_UPDATE_GOLDEN=1`.

mod common;

use std::path::Path;

use serde_json::Value;

const NUM_TOL: f64 = 1e-9;

fn strip_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

fn compare(path: &str, got: &Value, want: &Value, diffs: &mut Vec<String>) {
    match (got, want) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            if (a - b).abs() > NUM_TOL * a.abs().max(b.abs()).max(1.0) {
                diffs.push(format!("{path}: {a} != {b}"));
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                compare(&format!("{path}[{i}]"), x, y, diffs);
            }
        }
        (Value::Object(a), Value::Object(b)) if a.len() == b.len() => {
            for (k, x) in a {
                match b.get(k) {
                    Some(y) => compare(&format!("{path}.{k}"), x, y, diffs),
                    None => diffs.push(format!("{path}.{k}: unexpected key")),
                }
            }
        }
        _ if got == want => {}
        _ => diffs.push(format!("{path}: {got} != {want}")),
    }
}

fn check_golden(name: &str) {
    let dir = tempfile::tempdir().unwrap();
    let (report, _) = common::analyze(dir.path(), name, &[]);
    let report = strip_timestamp(report);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{name}.report.json"));
    if std::env::var_os("IMK_UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, serde_json::to_string_pretty(&report).unwrap() + "\n").unwrap();
        return;
    }
    let want: Value = serde_json::from_str(&std::fs::read_to_string(&golden).unwrap()).unwrap();
    let mut diffs = Vec::new();
    compare("$", &report, &want, &mut diffs);
    assert!(diffs.is_empty(), "{name} differs from golden:\n{}", diffs.join("\n"));
}

#[test]
fn ecoli_matches_golden() {
    check_golden("ecoli");
}

#[test]
fn linear_integrator_matches_golden() {
    check_golden("linear-integrator");
}

#[test]
fn linear_harmonic_matches_golden() {
    check_golden("linear-harmonic");
}
