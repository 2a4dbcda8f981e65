#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn imk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imk")).args(args).output().expect("imk runs")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Writes a preset's files into `dir` and returns (system, exo) paths.
pub fn write_preset(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let out = imk(&["example", name, "--dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join(format!("{name}.system.json")), dir.join(format!("{name}.exo.json")))
}

pub fn analyze(dir: &Path, name: &str, extra: &[&str]) -> (Value, i32) {
    let (sys, exo) = write_preset(dir, name);
    let report = dir.join(format!("{name}.report.json"));
    let mut args = vec!["analyze", sys.to_str().unwrap(), exo.to_str().unwrap(), "--report", report.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = imk(&args);
    let code = out.status.code().expect("exit code");
    let text = std::fs::read_to_string(&report).expect("report written");
    (serde_json::from_str(&text).unwrap(), code)
}

pub fn stage<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["stages"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["name"] == name)
        .unwrap_or_else(|| panic!("no stage {name}"))
}
