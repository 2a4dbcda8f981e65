//! Input file schemas for plants and exosystems.

use std::collections::BTreeMap;
use std::path::Path;

use imk_core::exo::Exosystem;
use imk_core::expr::{parse, rational_from_f64, ParamValues, Rational};
use imk_core::linpoly::{LinSys, RMatrix};
use imk_core::vfield::{AffineSystem, VectorField};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Nonlinear,
    Linear,
}

/// Plant description. Nonlinear plants give `f`, `g`, `h` as expressions in
/// `x1..xn`; linear plants give `A`, `b`, `c`. Parameters map to a value or
/// to `null` when left symbolic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub schema_version: u32,
    pub kind: SystemKind,
    pub state_dim: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    /// Per-coordinate working box `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub affine: AffineSystem,
    pub linear: Option<LinSys>,
    pub initial_states: Option<Vec<Vec<f64>>>,
}

fn check_version(v: u32) -> Result<(), CliError> {
    if v != SCHEMA_VERSION {
        return Err(CliError::input(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

fn check_states(states: &Option<Vec<Vec<f64>>>, dim: usize, what: &str) -> Result<(), CliError> {
    if let Some(s) = states {
        if s.is_empty() {
            return Err(CliError::input(format!("{what} initial_states is empty")));
        }
        if let Some(bad) = s.iter().find(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
            return Err(CliError::input(format!("{what} initial state {bad:?} must have {dim} finite entries")));
        }
    }
    Ok(())
}

fn split_params(params: &BTreeMap<String, Option<f64>>) -> (Vec<String>, ParamValues) {
    let names = params.keys().cloned().collect();
    let values = params.iter().filter_map(|(k, v)| v.map(|v| (k.clone(), v))).collect();
    (names, values)
}

impl SystemFile {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = read(path)?;
        let file: SystemFile = serde_json::from_slice(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok((file, bytes))
    }

    pub fn build(&self) -> Result<LoadedSystem, CliError> {
        check_version(self.schema_version)?;
        let n = self.state_dim;
        if n == 0 {
            return Err(CliError::input("state_dim must be positive"));
        }
        check_states(&self.initial_states, n, "plant")?;
        let domain = match &self.domain {
            None => None,
            Some(d) => {
                if d.len() != n || d.iter().any(|[lo, hi]| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
                    return Err(CliError::input(format!("domain must list {n} intervals [lo, hi] with lo < hi")));
                }
                Some(d.iter().map(|[lo, hi]| (*lo, *hi)).collect())
            }
        };
        match self.kind {
            SystemKind::Nonlinear => {
                let (Some(f), Some(g), Some(h)) = (&self.f, &self.g, &self.h) else {
                    return Err(CliError::input("nonlinear systems need f, g and h"));
                };
                if self.a.is_some() || self.b.is_some() || self.c.is_some() {
                    return Err(CliError::input("nonlinear systems take f, g, h, not A, b, c"));
                }
                if f.len() != n || g.len() != n {
                    return Err(CliError::input(format!("f and g must have state_dim = {n} components")));
                }
                let (names, values) = split_params(&self.params);
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let parse_all = |v: &[String]| -> Result<VectorField, CliError> {
                    let e = v.iter().map(|s| parse(s, n, &refs)).collect::<Result<Vec<_>, _>>().map_err(CliError::input)?;
                    Ok(VectorField::new(e))
                };
                let affine = AffineSystem::new(
                    parse_all(f)?,
                    parse_all(g)?,
                    parse(h, n, &refs).map_err(CliError::input)?,
                    names,
                    values,
                    domain,
                )
                .map_err(CliError::input)?;
                Ok(LoadedSystem { affine, linear: None, initial_states: self.initial_states.clone() })
            }
            SystemKind::Linear => {
                let (Some(a), Some(b), Some(c)) = (&self.a, &self.b, &self.c) else {
                    return Err(CliError::input("linear systems need A, b and c"));
                };
                if self.f.is_some() || self.g.is_some() || self.h.is_some() || !self.params.is_empty() {
                    return Err(CliError::input("linear systems take A, b, c only"));
                }
                if a.len() != n || a.iter().any(|r| r.len() != n) || b.len() != n || c.len() != n {
                    return Err(CliError::input(format!("A must be {n}x{n}; b and c must have {n} entries")));
                }
                if a.iter().flatten().chain(b).chain(c).any(|v| !v.is_finite()) {
                    return Err(CliError::input("A, b, c must be finite"));
                }
                let lin = LinSys::from_f64(a, b, c).map_err(CliError::input)?;
                let mut affine = lin.to_affine().map_err(CliError::input)?;
                affine.domain = domain;
                Ok(LoadedSystem { affine, linear: Some(lin), initial_states: self.initial_states.clone() })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExoKind {
    Constant,
    Harmonic,
    OdeCoeffs,
    Linear,
    Symbolic,
}

/// Exosystem description: `constant` (`w' = 0`), `harmonic` with `omega`,
/// `ode_coeffs` (`u^(l) + b1 u^(l-1) + ... + bl u = 0`), `linear` with `Q`
/// and `theta`, or `symbolic` with `field` and `output` in `x1..xm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoFile {
    pub schema_version: u32,
    pub kind: ExoKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct LoadedExo {
    pub exo: Exosystem,
    pub initial_states: Option<Vec<Vec<f64>>>,
}

fn rationals(v: &[f64]) -> Result<Vec<Rational>, CliError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::input("coefficients must be finite"));
    }
    Ok(v.iter().map(|&x| rational_from_f64(x)).collect())
}

impl ExoFile {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = read(path)?;
        let file: ExoFile = serde_json::from_slice(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok((file, bytes))
    }

    pub fn build(&self) -> Result<LoadedExo, CliError> {
        check_version(self.schema_version)?;
        let exo = match self.kind {
            ExoKind::Constant => Exosystem::constant(),
            ExoKind::Harmonic => {
                let w = self.omega.ok_or_else(|| CliError::input("harmonic exosystems need omega"))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(CliError::input("omega must be positive"));
                }
                Exosystem::harmonic(rational_from_f64(w))
            }
            ExoKind::OdeCoeffs => {
                let c = self.coeffs.as_ref().ok_or_else(|| CliError::input("ode_coeffs exosystems need coeffs"))?;
                Exosystem::from_ode_coeffs(&rationals(c)?).map_err(CliError::input)?
            }
            ExoKind::Linear => {
                let (Some(q), Some(theta)) = (&self.q, &self.theta) else {
                    return Err(CliError::input("linear exosystems need Q and theta"));
                };
                let m = q.len();
                if m == 0 || q.iter().any(|r| r.len() != m) {
                    return Err(CliError::input("Q must be square and nonempty"));
                }
                let rows = q.iter().map(|r| rationals(r)).collect::<Result<Vec<_>, _>>()?;
                Exosystem::linear(RMatrix::from_rows(rows), rationals(theta)?).map_err(CliError::input)?
            }
            ExoKind::Symbolic => {
                let (Some(field), Some(output)) = (&self.field, &self.output) else {
                    return Err(CliError::input("symbolic exosystems need field and output"));
                };
                let m = field.len();
                let names: Vec<String> = self.params.keys().cloned().collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let q = VectorField::parse(&field.iter().map(String::as_str).collect::<Vec<_>>(), m, &refs)
                    .map_err(CliError::input)?;
                let theta = parse(output, m, &refs).map_err(CliError::input)?;
                Exosystem::symbolic(q, theta, names, self.params.clone().into_iter().collect()).map_err(CliError::input)?
            }
        };
        check_states(&self.initial_states, exo.dim(), "exosystem")?;
        Ok(LoadedExo { exo, initial_states: self.initial_states.clone() })
    }
}

/// Matrices for a standalone embedding solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedFile {
    pub schema_version: u32,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl EmbedFile {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = read(path)?;
        let file: EmbedFile = serde_json::from_slice(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        check_version(file.schema_version)?;
        Ok((file, bytes))
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
