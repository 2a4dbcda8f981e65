use std::fmt::Display;
use std::io;
use std::path::PathBuf;

use imk_core::exo::ExoError;
use imk_core::expr::ExprError;
use imk_core::linpoly::LinError;
use imk_core::nform::NformError;
use imk_core::sim::SimError;
use imk_core::vfield::VfieldError;
use serde::Serialize;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_PROPERTY_FAILED: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Errors that stop a command before any report exists.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn input(msg: impl Display) -> Self {
        CliError::Input(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        EXIT_INVALID_INPUT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Property,
    Numerical,
    Input,
}

/// Failure of one pipeline stage, classified for the exit code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageError {
    pub kind: FailureKind,
    pub message: String,
}

impl StageError {
    pub fn new(kind: FailureKind, msg: impl Display) -> Self {
        StageError { kind, message: msg.to_string() }
    }
}

impl From<ExprError> for StageError {
    fn from(e: ExprError) -> Self {
        let kind = match e {
            ExprError::Inconclusive { .. } | ExprError::Domain { .. } => FailureKind::Numerical,
            _ => FailureKind::Input,
        };
        StageError::new(kind, e)
    }
}

impl From<SimError> for StageError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Expr(e) => e.into(),
            SimError::Dimension(_) => StageError::new(FailureKind::Input, e),
            _ => StageError::new(FailureKind::Numerical, e),
        }
    }
}

impl From<VfieldError> for StageError {
    fn from(e: VfieldError) -> Self {
        match e {
            VfieldError::Expr(e) => e.into(),
            VfieldError::Inconclusive(_) => StageError::new(FailureKind::Numerical, e),
            VfieldError::Dimension(_) => StageError::new(FailureKind::Input, e),
            VfieldError::DegenerateGain { .. } => StageError::new(FailureKind::Property, e),
        }
    }
}

impl From<LinError> for StageError {
    fn from(e: LinError) -> Self {
        let kind = match e {
            LinError::Numerical(_) | LinError::DivisionByZero => FailureKind::Numerical,
            LinError::Dimension(_) => FailureKind::Input,
            _ => FailureKind::Property,
        };
        StageError::new(kind, e)
    }
}

impl From<ExoError> for StageError {
    fn from(e: ExoError) -> Self {
        match e {
            ExoError::Lin(e) => e.into(),
            ExoError::Expr(e) => e.into(),
            ExoError::Sim(e) => e.into(),
            ExoError::Dimension(_) | ExoError::NotLinear => StageError::new(FailureKind::Input, e),
        }
    }
}

impl From<NformError> for StageError {
    fn from(e: NformError) -> Self {
        match e {
            NformError::Vfield(e) => e.into(),
            NformError::Expr(e) => e.into(),
            NformError::BadRelativeDegree { .. } | NformError::Dimension { .. } => StageError::new(FailureKind::Input, e),
            _ => StageError::new(FailureKind::Property, e),
        }
    }
}
