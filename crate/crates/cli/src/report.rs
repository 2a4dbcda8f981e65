//! Report assembly and atomic output.

use std::io::Write;
use std::path::Path;

use imk_core::grade::Grade;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, FailureKind, StageError, EXIT_INVALID_INPUT, EXIT_NUMERICAL, EXIT_PASS, EXIT_PROPERTY_FAILED};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: ToolInfo = ToolInfo { name: "imk", version: env!("CARGO_PKG_VERSION") };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub file: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn new(path: &Path, bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        InputDigest {
            file: path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned()),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grade: Option<Grade>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub stage: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: ToolInfo,
    pub command: String,
    pub timestamp: String,
    pub inputs: Vec<InputDigest>,
    pub settings: Value,
    pub stages: Vec<Stage>,
    /// Weakest grade over all graded stages.
    pub grade: Grade,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub exit_code: i32,
}

impl Report {
    pub fn new(command: &str, inputs: Vec<InputDigest>, settings: Value) -> Self {
        Report {
            tool: TOOL,
            command: command.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            inputs,
            settings,
            stages: Vec::new(),
            grade: Grade::Proven,
            failure: None,
            exit_code: EXIT_PASS,
        }
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn completed(&mut self, name: &str, grade: Grade, result: impl Serialize) {
        self.push(name, StageStatus::Completed, Some(grade), None, to_value(result));
    }

    pub fn completed_with_note(&mut self, name: &str, grade: Grade, note: String, result: impl Serialize) {
        self.push(name, StageStatus::Completed, Some(grade), Some(note), to_value(result));
    }

    pub fn skipped(&mut self, name: &str, reason: impl Into<String>) {
        self.push(name, StageStatus::Skipped, None, Some(reason.into()), Value::Null);
    }

    /// Records a stage that could not produce a result. Only the first
    /// failure is kept as the report's failure.
    pub fn failed(&mut self, name: &str, err: StageError) {
        let grade = match err.kind {
            FailureKind::Property => Some(Grade::Failed),
            _ => None,
        };
        self.push(name, StageStatus::Failed, grade, Some(err.message.clone()), Value::Null);
        if self.failure.is_none() {
            self.failure = Some(Failure { stage: name.to_string(), kind: err.kind, message: err.message });
        }
    }

    fn push(&mut self, name: &str, status: StageStatus, grade: Option<Grade>, note: Option<String>, result: Value) {
        self.stages.push(Stage { name: name.to_string(), status, grade, note, result });
        self.finalize();
    }

    fn finalize(&mut self) {
        let mut grade = Grade::combine(self.stages.iter().filter_map(|s| s.grade));
        if self.failure.as_ref().is_some_and(|f| f.kind != FailureKind::Property) {
            grade = grade.weakest(Grade::Unknown);
        }
        self.grade = grade;
        self.exit_code = exit_code(self);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Exit code from report content alone.
pub fn exit_code(r: &Report) -> i32 {
    match r.failure.as_ref().map(|f| f.kind) {
        Some(FailureKind::Input) => EXIT_INVALID_INPUT,
        Some(FailureKind::Numerical) => EXIT_NUMERICAL,
        Some(FailureKind::Property) => EXIT_PROPERTY_FAILED,
        None if r.grade == Grade::Failed => EXIT_PROPERTY_FAILED,
        None => EXIT_PASS,
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Report to `path`, or to stdout when no path is given.
pub fn emit(report: &Report, path: Option<&Path>) -> Result<(), CliError> {
    let text = report.to_json();
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}
