//! Exosystems `w' = Q(w)`, `u = θ(w)` generating the admissible inputs, and
//! tests for stable modes and Poisson stability.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{CompiledExpr, Expr, ExprError, ParamValues, Rational};
use crate::linpoly::{characteristic_polynomial, poly_roots, LinError, RMatrix, RPoly};
use crate::sim::{integrate, IntegratorOptions, SimError};
use crate::vfield::VectorField;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExoError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Lin(#[from] LinError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("operation requires a linear exosystem")]
    NotLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exosystem {
    Linear {
        q: RMatrix,
        #[serde(serialize_with = "ser_rationals")]
        theta: Vec<Rational>,
    },
    Symbolic {
        q: VectorField,
        theta: Expr,
        params: Vec<String>,
        values: ParamValues,
    },
}

fn ser_rationals<S: serde::Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(crate::expr::rational_to_f64))
}

impl Exosystem {
    pub fn linear(q: RMatrix, theta: Vec<Rational>) -> Result<Self, ExoError> {
        if q.nrows() == 0 || !q.is_square() || theta.len() != q.nrows() {
            return Err(ExoError::Dimension("Q must be square and θ must match it".into()));
        }
        Ok(Exosystem::Linear { q, theta })
    }

    pub fn symbolic(q: VectorField, theta: Expr, params: Vec<String>, values: ParamValues) -> Result<Self, ExoError> {
        let m = q.dim();
        if m == 0 {
            return Err(ExoError::Dimension("empty exosystem".into()));
        }
        for e in q.components().iter().chain(std::iter::once(&theta)) {
            if e.max_var().is_some_and(|v| v >= m) {
                return Err(ExoError::Dimension(format!("`{e}` references a coordinate beyond w{m}")));
            }
        }
        // Prefer the linear representation whenever the field is linear with constant coefficients.
        if let Some(lin) = as_linear(&q, &theta) {
            return Ok(lin);
        }
        Ok(Exosystem::Symbolic { q, theta, params, values })
    }

    /// Companion form of `u^(ℓ) + b₁u^(ℓ−1) + … + b_ℓ u = 0` with `u = w₁`.
    pub fn from_ode_coeffs(coeffs: &[Rational]) -> Result<Self, ExoError> {
        let l = coeffs.len();
        if l == 0 {
            return Err(ExoError::Dimension("at least one coefficient is required".into()));
        }
        let mut q = RMatrix::zeros(l, l);
        for i in 0..l - 1 {
            q[(i, i + 1)] = Rational::one();
        }
        for (j, b) in coeffs.iter().rev().enumerate() {
            q[(l - 1, j)] = -b.clone();
        }
        let mut theta = vec![Rational::zero(); l];
        theta[0] = Rational::one();
        Exosystem::linear(q, theta)
    }

    /// `w' = 0`, `u = w`.
    pub fn constant() -> Self {
        Exosystem::from_ode_coeffs(&[Rational::zero()]).expect("valid")
    }

    /// `u'' + ω² u = 0`.
    pub fn harmonic(omega: Rational) -> Self {
        Exosystem::from_ode_coeffs(&[Rational::zero(), &omega * &omega]).expect("valid")
    }

    pub fn dim(&self) -> usize {
        match self {
            Exosystem::Linear { q, .. } => q.nrows(),
            Exosystem::Symbolic { q, .. } => q.dim(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Exosystem::Linear { .. })
    }

    /// Characteristic polynomial of `Q` (linear exosystems).
    pub fn char_poly(&self) -> Result<RPoly, ExoError> {
        match self {
            Exosystem::Linear { q, .. } => Ok(characteristic_polynomial(q)),
            _ => Err(ExoError::NotLinear),
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>, ExoError> {
        Ok(poly_roots(&self.char_poly()?)?)
    }

    pub fn compile(&self) -> Result<CompiledExo, ExoError> {
        Ok(match self {
            Exosystem::Linear { q, theta } => CompiledExo::Linear {
                q: q.to_dmatrix(),
                theta: theta.iter().map(crate::expr::rational_to_f64).collect(),
            },
            Exosystem::Symbolic { q, theta, values, .. } => CompiledExo::Symbolic {
                q: q.components().iter().map(|c| c.compile(values)).collect::<Result<_, _>>()?,
                theta: theta.compile(values)?,
            },
        })
    }
}

fn as_linear(q: &VectorField, theta: &Expr) -> Option<Exosystem> {
    let m = q.dim();
    let rows: Vec<Vec<Rational>> = q
        .components()
        .iter()
        .map(|c| {
            let (coeffs, offset) = c.affine_parts(m)?;
            if !offset.is_zero_const() {
                return None;
            }
            coeffs.iter().map(Expr::as_rational).collect::<Option<Vec<_>>>()
        })
        .collect::<Option<_>>()?;
    let (tc, toff) = theta.affine_parts(m)?;
    if !toff.is_zero_const() {
        return None;
    }
    let th = tc.iter().map(Expr::as_rational).collect::<Option<Vec<_>>>()?;
    Some(Exosystem::Linear { q: RMatrix::from_rows(rows), theta: th })
}

/// Numeric form of an exosystem for simulation.
#[derive(Debug, Clone)]
pub enum CompiledExo {
    Linear { q: DMatrix<f64>, theta: Vec<f64> },
    Symbolic { q: Vec<CompiledExpr>, theta: CompiledExpr },
}

impl CompiledExo {
    pub fn dim(&self) -> usize {
        match self {
            CompiledExo::Linear { q, .. } => q.nrows(),
            CompiledExo::Symbolic { q, .. } => q.len(),
        }
    }

    pub fn field(&self, w: &[f64], dw: &mut [f64]) -> Result<(), ExprError> {
        match self {
            CompiledExo::Linear { q, .. } => {
                for (i, d) in dw.iter_mut().enumerate() {
                    *d = (0..w.len()).map(|j| q[(i, j)] * w[j]).sum();
                }
            }
            CompiledExo::Symbolic { q, .. } => {
                for (d, e) in dw.iter_mut().zip(q) {
                    *d = e.eval(w)?;
                }
            }
        }
        Ok(())
    }

    pub fn output(&self, w: &[f64]) -> Result<f64, ExprError> {
        match self {
            CompiledExo::Linear { theta, .. } => Ok(theta.iter().zip(w).map(|(a, b)| a * b).sum()),
            CompiledExo::Symbolic { theta, .. } => theta.eval(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoStableModes {
    pub holds: bool,
    pub eigenvalues: Vec<Complex64>,
    pub eps: f64,
}

/// Every eigenvalue of `Q` has real part ≥ −ε.
pub fn check_no_stable_modes(exo: &Exosystem, eps: f64) -> Result<NoStableModes, ExoError> {
    let eigenvalues = exo.eigenvalues()?;
    Ok(NoStableModes { holds: eigenvalues.iter().all(|z| z.re >= -eps), eigenvalues, eps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PoissonStatus {
    Proven,
    ProvenNot,
    Sampled,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCluster {
    pub value: Complex64,
    pub multiplicity: usize,
    /// `rank(Q − λI)`.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonVerdict {
    pub status: PoissonStatus,
    pub eigenvalues: Vec<EigenCluster>,
    /// Per sampled trajectory: minimum of `‖w(t) − w(0)‖` over `[T/2, T]`.
    pub return_distances: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Tolerance on the real part of imaginary-axis eigenvalues.
pub const POISSON_EPS: f64 = 1e-9;

/// Square-free factorization `χ = Π fᵢ^i` over the rationals (Yun).
fn squarefree_factors(p: &RPoly) -> Vec<(RPoly, usize)> {
    let mut out = Vec::new();
    let dp = p.derivative();
    let a0 = p.gcd(&dp);
    if a0.degree() == Some(0) && p.degree().unwrap_or(0) > 0 {
        return vec![(p.monic(), 1)];
    }
    let mut b = p.divmod(&a0).expect("nonzero").0;
    let mut c = dp.divmod(&a0).expect("nonzero").0;
    let mut d = c.sub(&b.derivative());
    let mut i = 1;
    while b.degree().is_some_and(|k| k > 0) {
        let a = b.gcd(&d);
        if a.degree().is_some_and(|k| k > 0) {
            out.push((a.clone(), i));
        }
        b = b.divmod(&a).expect("nonzero").0;
        c = d.divmod(&a).expect("nonzero").0;
        d = c.sub(&b.derivative());
        i += 1;
    }
    out
}

fn complex_rank(q: &DMatrix<f64>, lambda: Complex64) -> usize {
    let m = q.nrows();
    let a = DMatrix::from_fn(m, m, |i, j| {
        Complex64::new(q[(i, j)], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) }
    });
    let sv = a.svd(false, false).singular_values;
    let norm = q.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    sv.iter().filter(|&&s| s > 1e-8 * norm).count()
}

/// Poisson stability. Linear: spectral test (imaginary and semisimple
/// spectrum); symbolic: sampled recurrence over `[T/2, T]`.
pub fn check_poisson_stable(exo: &Exosystem, horizon: f64, delta: f64, seed: u64) -> Result<PoissonVerdict, ExoError> {
    match exo {
        Exosystem::Linear { q, .. } => {
            let chi = characteristic_polynomial(q);
            let qf = q.to_dmatrix();
            let m = q.nrows();
            let mut clusters = Vec::new();
            for (factor, mult) in squarefree_factors(&chi) {
                for z in poly_roots(&factor)? {
                    clusters.push(EigenCluster { value: z, multiplicity: mult, rank: complex_rank(&qf, z) });
                }
            }
            clusters.sort_by(|a, b| a.value.re.total_cmp(&b.value.re).then(a.value.im.total_cmp(&b.value.im)));
            let off_axis = clusters.iter().find(|c| c.value.re.abs() > POISSON_EPS);
            let defective = clusters.iter().find(|c| c.rank > m - c.multiplicity);
            let (status, diagnostic) = match (off_axis, defective) {
                (Some(c), _) => (PoissonStatus::ProvenNot, Some(format!("eigenvalue {} off the imaginary axis", c.value))),
                (None, Some(c)) => (
                    PoissonStatus::ProvenNot,
                    Some(format!("eigenvalue {} is defective (polynomial growth)", c.value)),
                ),
                (None, None) => (PoissonStatus::Proven, None),
            };
            Ok(PoissonVerdict { status, eigenvalues: clusters, return_distances: Vec::new(), diagnostic })
        }
        Exosystem::Symbolic { .. } => {
            let c = exo.compile()?;
            let m = c.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut distances = Vec::new();
            for _ in 0..3 {
                let w0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let rhs = |_: f64, w: &[f64], dw: &mut [f64]| -> Result<(), SimError> { Ok(c.field(w, dw)?) };
                let sol = match integrate(&rhs, 0.0, &w0, horizon, &IntegratorOptions::default()) {
                    Ok(s) => s,
                    Err(e) => {
                        return Ok(PoissonVerdict {
                            status: PoissonStatus::Unknown,
                            eigenvalues: Vec::new(),
                            return_distances: distances,
                            diagnostic: Some(format!("integration failed: {e}")),
                        })
                    }
                };
                let (ts, ws) = sol.sample_uniform(4001);
                let d = ts
                    .iter()
                    .zip(&ws)
                    .filter(|(t, _)| **t >= 0.5 * horizon)
                    .map(|(_, w)| w.iter().zip(&w0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                distances.push(d);
            }
            let ok = distances.iter().all(|&d| d < delta);
            Ok(PoissonVerdict {
                status: if ok { PoissonStatus::Sampled } else { PoissonStatus::Unknown },
                eigenvalues: Vec::new(),
                diagnostic: (!ok).then(|| format!("no return within δ = {delta:e} by T = {horizon}")),
                return_distances: distances,
            })
        }
    }
}

/// `u(t) = θ(w(t))` on a uniform grid with spacing `step`.
pub fn generate_input(exo: &Exosystem, w0: &[f64], horizon: f64, step: f64) -> Result<Vec<(f64, f64)>, ExoError> {
    if w0.len() != exo.dim() {
        return Err(ExoError::Dimension(format!("w0 has {} entries, exosystem has {}", w0.len(), exo.dim())));
    }
    if !(horizon > 0.0 && step > 0.0) {
        return Err(ExoError::Sim(SimError::BadHorizon(horizon)));
    }
    let n = (horizon / step).round() as usize;
    let ts: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(horizon)).collect();
    let c = exo.compile()?;
    match &c {
        CompiledExo::Linear { q, .. } => {
            let w0v = DVector::from_column_slice(w0);
            ts.iter()
                .map(|&t| {
                    let w = (q * t).exp() * &w0v;
                    Ok((t, c.output(w.as_slice())?))
                })
                .collect()
        }
        CompiledExo::Symbolic { .. } => {
            let rhs = |_: f64, w: &[f64], dw: &mut [f64]| -> Result<(), SimError> { Ok(c.field(w, dw)?) };
            let sol = integrate(&rhs, 0.0, w0, horizon, &IntegratorOptions::default())?;
            ts.iter().map(|&t| Ok((t, c.output(&sol.at(t))?))).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn r(v: i64) -> Rational {
        Rational::from_integer(v.into())
    }

    #[test]
    fn companion_examples() {
        let c = Exosystem::constant();
        assert_eq!(c, Exosystem::Linear { q: RMatrix::from_i64(&[&[0]]), theta: vec![r(1)] });
        let h = Exosystem::harmonic(r(2));
        assert_eq!(h, Exosystem::Linear { q: RMatrix::from_i64(&[&[0, 1], &[-4, 0]]), theta: vec![r(1), r(0)] });
        let ramp = Exosystem::from_ode_coeffs(&[r(0), r(0)]).unwrap();
        assert_eq!(ramp.char_poly().unwrap(), RPoly::from_i64(&[0, 0, 1]));
    }

    #[test]
    fn char_poly_matches_coefficients() {
        let e = Exosystem::from_ode_coeffs(&[r(3), r(-2), r(5)]).unwrap();
        assert_eq!(e.char_poly().unwrap(), RPoly::from_i64(&[5, -2, 3, 1]));
    }

    #[test]
    fn stable_modes() {
        assert!(check_no_stable_modes(&Exosystem::constant(), 1e-9).unwrap().holds);
        assert!(check_no_stable_modes(&Exosystem::harmonic(r(2)), 1e-9).unwrap().holds);
        let decaying = Exosystem::linear(RMatrix::from_i64(&[&[-1]]), vec![r(1)]).unwrap();
        assert!(!check_no_stable_modes(&decaying, 1e-9).unwrap().holds);
    }

    #[test]
    fn poisson_classification() {
        let st = |e: &Exosystem| check_poisson_stable(e, 10.0, 1e-3, 0).unwrap().status;
        assert_eq!(st(&Exosystem::constant()), PoissonStatus::Proven);
        assert_eq!(st(&Exosystem::harmonic(r(2))), PoissonStatus::Proven);
        let growth = Exosystem::linear(RMatrix::from_i64(&[&[1]]), vec![r(1)]).unwrap();
        assert_eq!(st(&growth), PoissonStatus::ProvenNot);
        let ramp = Exosystem::from_ode_coeffs(&[r(0), r(0)]).unwrap();
        assert_eq!(st(&ramp), PoissonStatus::ProvenNot);
        let zero2 = Exosystem::linear(RMatrix::zeros(2, 2), vec![r(1), r(1)]).unwrap();
        assert_eq!(st(&zero2), PoissonStatus::Proven);
        // (s² + 1)² realized semisimply: two identical harmonic blocks.
        let twice = Exosystem::linear(
            RMatrix::from_i64(&[&[0, 1, 0, 0], &[-1, 0, 0, 0], &[0, 0, 0, 1], &[0, 0, -1, 0]]),
            vec![r(1), r(0), r(1), r(0)],
        )
        .unwrap();
        assert_eq!(st(&twice), PoissonStatus::Proven);
        // ... and defectively as a companion matrix.
        let defective = Exosystem::from_ode_coeffs(&[r(0), r(2), r(0), r(1)]).unwrap();
        assert_eq!(st(&defective), PoissonStatus::ProvenNot);
    }

    #[test]
    fn symbolic_exosystem_recurrence() {
        // A nonlinear center: w1' = w2, w2' = -w1 - w1^3 (conservative).
        let q = VectorField::parse(&["x2", "-x1 - x1^3"], 2, &[]).unwrap();
        let exo = Exosystem::symbolic(q, parse("x1", 2, &[]).unwrap(), vec![], ParamValues::new()).unwrap();
        assert!(!exo.is_linear());
        let v = check_poisson_stable(&exo, 60.0, 5e-2, 1).unwrap();
        assert_eq!(v.status, PoissonStatus::Sampled, "{v:?}");
        let lin = Exosystem::symbolic(
            VectorField::parse(&["x2", "-4*x1"], 2, &[]).unwrap(),
            parse("x1", 2, &[]).unwrap(),
            vec![],
            ParamValues::new(),
        )
        .unwrap();
        assert_eq!(lin, Exosystem::harmonic(r(2)));
    }

    #[test]
    fn generated_inputs() {
        let u = generate_input(&Exosystem::constant(), &[3.0], 5.0, 0.5).unwrap();
        assert!(u.iter().all(|(_, v)| *v == 3.0));
        let u = generate_input(&Exosystem::harmonic(r(1)), &[1.0, 0.0], std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2 / 8.0)
            .unwrap();
        assert!(u.last().unwrap().1.abs() < 1e-8);
        let ramp = Exosystem::from_ode_coeffs(&[r(0), r(0)]).unwrap();
        let u = generate_input(&ramp, &[1.0, 1.0], 4.0, 1.0).unwrap();
        for (t, v) in u {
            assert!((v - (1.0 + t)).abs() < 1e-12);
        }
    }
}
