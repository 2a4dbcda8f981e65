//! Normal-form coordinates `z = (ζ, z₂)` for input-affine systems, the
//! output-driven internal-model form in the constant-τ case, verification of
//! user-supplied coordinates, and the internal-model output map φ.

mod symlin;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

pub use symlin::SymMatrix;

use crate::expr::{is_zero_with, sample_values, Expr, ExprError, ParamValues, Sample, SampleConfig, ZeroStatus, WITNESS_THRESHOLD};
use crate::grade::Grade;
use crate::sim::ImSystem;
use crate::vfield::{lie_derivative, relative_degree, tau_fields, AffineSystem, VectorField, VfieldError};

/// Points used for numeric cross-checks of symbolic results.
pub const SPOT_CHECK_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NformError {
    #[error("relative degree {r} outside 1..={n}")]
    BadRelativeDegree { r: usize, n: usize },
    #[error("τ_{index} depends on the state; only constant τ fields are constructed (verify user coordinates instead)")]
    NonConstantTau { index: usize },
    #[error("τ fields are linearly dependent (rank {rank} < {r})")]
    DependentTau { rank: usize, r: usize },
    #[error("invariant `{check}` failed: {detail}")]
    InvariantFailed { check: String, detail: String },
    #[error("ζ coordinates are not affine in x; φ needs the explicit inverse coordinate map")]
    NonAffineCoordinates,
    #[error("a(0, z₂) vanishes identically, but the normal-form gain must be nonzero everywhere")]
    ZeroGain,
    #[error("expected {expected} coordinate functions, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Vfield(#[from] VfieldError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub grade: Grade,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<ZeroStatus>,
}

impl NamedCheck {
    fn zero(name: String, e: &Expr, cfg: &SampleConfig) -> Result<Self, ExprError> {
        let status = is_zero_with(e, cfg)?;
        let (grade, detail) = match &status {
            ZeroStatus::ProvenZero => (Grade::Proven, "identically zero".to_string()),
            ZeroStatus::SampledZero { samples, max_abs } => {
                (Grade::Sampled, format!("zero at {samples} samples (max |value| {max_abs:.1e})"))
            }
            ZeroStatus::ProvenNonzeroConstant { value } => (Grade::Failed, format!("equals the constant {value}")),
            ZeroStatus::SampledNonzero { witness } => {
                (Grade::Failed, format!("{} = {:.6e} at x = {:?}", e, witness.value, witness.point))
            }
        };
        Ok(NamedCheck { name, grade, detail, status: Some(status) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum Construction {
    Constructed,
    VerifiedUserSupplied,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputDriven {
    pub grade: Grade,
    /// Set when `ż₂` depends on `ζ_j` for some `j ≥ 2`: only the weaker
    /// partition with `g₂ = 0` holds.
    pub downgraded: bool,
    pub checks: Vec<NamedCheck>,
}

/// Normal form `ζ̇_k = ζ_{k+1}`, `ζ̇_r = b(z) + a(z) u`, `ż₂ = f₂(ζ₁, z₂)`.
///
/// Expressions in `z` coordinates use `x1..xr` for `ζ` and `x(r+1)..xn` for `z₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalForm {
    pub r: usize,
    pub n: usize,
    /// `ζ_k = L_f^{k−1} h` in `x` coordinates.
    pub zeta: Vec<Expr>,
    /// Complement map rows; `z₂ = W x`.
    pub w: SymMatrix,
    pub z2: Vec<Expr>,
    /// `a = L_g L_f^{r−1} h` and `b = L_f^r h` in `x` coordinates.
    pub a_x: Expr,
    pub b_x: Expr,
    /// `x = Ψ(z)`, available when `ζ` is affine in `x`.
    pub inverse: Option<Vec<Expr>>,
    pub a: Option<Expr>,
    pub b: Option<Expr>,
    pub f2: Option<VectorField>,
    pub checks: Vec<NamedCheck>,
    pub output_driven: OutputDriven,
    pub construction: Construction,
    pub grade: Grade,
    pub params: Vec<String>,
    pub values: ParamValues,
    pub domain: Option<Vec<(f64, f64)>>,
    pub seed: u64,
}

impl NormalForm {
    /// `f₁ = (ζ₂, …, ζ_r, b)` in `z` coordinates.
    pub fn f1(&self) -> Option<Vec<Expr>> {
        let b = self.b.clone()?;
        let mut f1: Vec<Expr> = (1..self.r).map(Expr::var).collect();
        f1.push(b);
        Some(f1)
    }

    /// `g₁ = (0, …, 0, a)` in `z` coordinates.
    pub fn g1(&self) -> Option<Vec<Expr>> {
        let a = self.a.clone()?;
        let mut g1 = vec![Expr::zero(); self.r - 1];
        g1.push(a);
        Some(g1)
    }

    fn sample_config(&self) -> SampleConfig {
        SampleConfig::new(self.seed)
            .with_box(self.domain.clone().unwrap_or_default())
            .with_params(self.values.clone())
            .with_dim(self.n)
    }
}

/// `[h, L_f h, …, L_f^{r−1} h]`.
pub fn zeta_coordinates(sys: &AffineSystem, r: usize) -> Vec<Expr> {
    let mut d = sys.output_derivatives(r.saturating_sub(1));
    d.truncate(r);
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateReport {
    pub checks: Vec<NamedCheck>,
    pub output_driven: OutputDriven,
    pub grade: Grade,
    /// Names of failed checks.
    pub failed: Vec<String>,
}

struct CheckSet {
    required: Vec<NamedCheck>,
    output_driven: OutputDriven,
}

fn jacobian_of(coords: &[Expr], n: usize) -> SymMatrix {
    coords.iter().map(|c| c.gradient(n)).collect()
}

fn determinant_check(det: &Expr, cfg: &SampleConfig) -> Result<NamedCheck, ExprError> {
    let name = "jacobian_determinant".to_string();
    let det = &det.bind_params(&cfg.params);
    if let Some(c) = det.as_rational() {
        let (grade, detail) = if c == num_rational::BigRational::from_integer(0.into()) {
            (Grade::Failed, "coordinate Jacobian is singular".to_string())
        } else {
            (Grade::Proven, format!("det = {det}"))
        };
        return Ok(NamedCheck { name, grade, detail, status: None });
    }
    let samples = sample_values(det, &cfg.clone().with_samples(SPOT_CHECK_POINTS))?;
    let worst = samples.iter().min_by(|a, b| a.value.abs().total_cmp(&b.value.abs()));
    Ok(match worst {
        Some(s) if s.value.abs() <= WITNESS_THRESHOLD => NamedCheck {
            name,
            grade: Grade::Failed,
            detail: format!("det = {:.3e} at x = {:?}", s.value, s.point),
            status: None,
        },
        Some(s) => NamedCheck {
            name,
            grade: Grade::Sampled,
            detail: format!("min |det| = {:.3e} over {} samples", s.value.abs(), samples.len()),
            status: None,
        },
        None => NamedCheck { name, grade: Grade::Unknown, detail: "no samples".into(), status: None },
    })
}

/// Numeric route for `∂ż₂_k/∂ζ_j`: solve `J(x) v = e_j` and take `∇(L_f z₂_k) · v`.
fn numeric_partial(jac: &SymMatrix, grad: &[Expr], j: usize, s: &Sample) -> Option<f64> {
    let n = jac.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in jac.iter().enumerate() {
        for (k, e) in row.iter().enumerate() {
            m[(i, k)] = e.eval(&s.point, &s.params).ok()?;
        }
    }
    let v = m.lu().solve(&DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))?;
    let mut acc = 0.0;
    for (k, g) in grad.iter().enumerate() {
        acc += g.eval(&s.point, &s.params).ok()? * v[k];
    }
    Some(acc)
}

fn run_checks(sys: &AffineSystem, r: usize, zeta: &[Expr], z2: &[Expr], cfg: &SampleConfig) -> Result<CheckSet, NformError> {
    let n = sys.dim();
    let mut required = Vec::new();
    for k in 0..r.saturating_sub(1) {
        let chain = lie_derivative(&zeta[k], &sys.f) - &zeta[k + 1];
        required.push(NamedCheck::zero(format!("chain_{}", k + 1), &chain, cfg)?);
        let input = lie_derivative(&zeta[k], &sys.g);
        required.push(NamedCheck::zero(format!("input_free_zeta_{}", k + 1), &input, cfg)?);
    }
    for (k, c) in z2.iter().enumerate() {
        let lg = lie_derivative(c, &sys.g);
        required.push(NamedCheck::zero(format!("input_free_z2_{}", k + 1), &lg, cfg)?);
    }
    let coords: Vec<Expr> = zeta.iter().chain(z2).cloned().collect();
    let jac = jacobian_of(&coords, n);
    let det = symlin::determinant(&jac);
    let det_check = determinant_check(&det, cfg)?;
    let singular = det_check.grade == Grade::Failed;
    required.push(det_check);

    let mut od = Vec::new();
    if r >= 2 && !z2.is_empty() && !singular {
        let inv = symlin::inverse(&jac).ok_or_else(|| NformError::InvariantFailed {
            check: "jacobian_determinant".into(),
            detail: "coordinate Jacobian has no symbolic inverse".into(),
        })?;
        let spot_cfg = cfg.clone().with_samples(SPOT_CHECK_POINTS);
        let mut max_gap = 0.0f64;
        for (k, c) in z2.iter().enumerate() {
            let dz2 = lie_derivative(c, &sys.f);
            let grad = dz2.gradient(n);
            for j in 1..r {
                let v = VectorField::new(inv.iter().map(|row| row[j].clone()).collect());
                let partial = lie_derivative(&dz2, &v);
                od.push(NamedCheck::zero(format!("z2_{}_independent_of_zeta_{}", k + 1, j + 1), &partial, cfg)?);
                for s in sample_values(&partial, &spot_cfg)? {
                    if let Some(num) = numeric_partial(&jac, &grad, j, &s) {
                        max_gap = max_gap.max((num - s.value).abs() / (1.0 + num.abs()));
                    }
                }
            }
        }
        let agree = max_gap <= 1e-8;
        od.push(NamedCheck {
            name: "numeric_spot_check".into(),
            grade: if agree { Grade::Sampled } else { Grade::Failed },
            detail: format!("max relative gap {max_gap:.1e} over {SPOT_CHECK_POINTS} points"),
            status: None,
        });
    }
    // The numeric cross-check only ever lowers the grade.
    let grade = Grade::combine(od.iter().filter(|c| c.status.is_some() || c.grade == Grade::Failed).map(|c| c.grade));
    Ok(CheckSet {
        required,
        output_driven: OutputDriven { grade, downgraded: grade == Grade::Failed, checks: od },
    })
}

/// Checks a proposed change of coordinates `z = (ζ(x), z₂(x))`.
pub fn verify_coordinate_change(
    sys: &AffineSystem,
    r: usize,
    zeta: &[Expr],
    z2: &[Expr],
    seed: u64,
) -> Result<CoordinateReport, NformError> {
    let n = sys.dim();
    if r == 0 || r > n {
        return Err(NformError::BadRelativeDegree { r, n });
    }
    if zeta.len() != r || z2.len() != n - r {
        return Err(NformError::Dimension { expected: n, got: zeta.len() + z2.len() });
    }
    let set = run_checks(sys, r, zeta, z2, &sys.sample_config(seed))?;
    let checks = set.required;
    let grade = Grade::combine(checks.iter().map(|c| c.grade)).weakest(set.output_driven.grade);
    let failed = checks
        .iter()
        .chain(&set.output_driven.checks)
        .filter(|c| c.grade == Grade::Failed)
        .map(|c| c.name.clone())
        .collect();
    Ok(CoordinateReport { checks, output_driven: set.output_driven, grade, failed })
}

/// Builds the normal form when every `τ_i` is a constant vector field.
pub fn build_normal_form(sys: &AffineSystem, r: usize, seed: u64) -> Result<NormalForm, NformError> {
    let n = sys.dim();
    if r == 0 || r > n {
        return Err(NformError::BadRelativeDegree { r, n });
    }
    let cfg = sys.sample_config(seed);
    let rel = relative_degree(sys, seed)?;
    if rel.r() != Some(r) {
        return Err(NformError::InvariantFailed {
            check: "relative_degree".into(),
            detail: format!("system has relative degree {:?}, not {r}", rel.r()),
        });
    }
    let taus = tau_fields(sys, r)?;
    if let Some(i) = taus.taus.iter().position(|t| !t.is_constant()) {
        return Err(NformError::NonConstantTau { index: i + 1 });
    }
    let tau_rows: SymMatrix = taus.taus.iter().map(|t| t.components().to_vec()).collect();
    let w = symlin::nullspace(&tau_rows, n);
    if w.len() != n - r {
        return Err(NformError::DependentTau { rank: n - w.len(), r });
    }
    let z2: Vec<Expr> = w
        .iter()
        .map(|row| Expr::Add(row.iter().enumerate().map(|(j, c)| c * &Expr::var(j)).collect()).normalize())
        .collect();
    let zeta = zeta_coordinates(sys, r);
    let derivs = sys.output_derivatives(r);
    let a_x = lie_derivative(&derivs[r - 1], &sys.g);
    let b_x = derivs[r].clone();

    let mut checks = vec![NamedCheck {
        name: "gain_nonzero".into(),
        grade: rel.grade,
        detail: format!("a = {a_x}"),
        status: Some(rel.gain_status.clone()),
    }];
    let set = run_checks(sys, r, &zeta, &z2, &cfg)?;
    checks.extend(set.required);
    if let Some(c) = checks.iter().find(|c| c.grade == Grade::Failed) {
        return Err(NformError::InvariantFailed { check: c.name.clone(), detail: c.detail.clone() });
    }

    let inverse = affine_inverse(&zeta, &w, n);
    let (a, b, f2) = match &inverse {
        Some(psi) => {
            let pull = |e: &Expr| e.substitute_vars(&|i| psi[i].clone());
            let f2 = VectorField::new(z2.iter().map(|c| pull(&lie_derivative(c, &sys.f))).collect());
            (Some(pull(&a_x)), Some(pull(&b_x)), Some(f2))
        }
        None => (None, None, None),
    };
    let grade = Grade::combine(checks.iter().map(|c| c.grade));
    Ok(NormalForm {
        r,
        n,
        zeta,
        w,
        z2,
        a_x,
        b_x,
        inverse,
        a,
        b,
        f2,
        checks,
        output_driven: set.output_driven,
        construction: Construction::Constructed,
        grade,
        params: sys.params.clone(),
        values: sys.values.clone(),
        domain: sys.domain.clone(),
        seed,
    })
}

/// `x = M⁻¹ (z − d)` when `(ζ, Wx) = M x + d`.
fn affine_inverse(zeta: &[Expr], w: &SymMatrix, n: usize) -> Option<Vec<Expr>> {
    let mut m: SymMatrix = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for z in zeta {
        let (coeffs, offset) = z.affine_parts(n)?;
        m.push(coeffs);
        d.push(offset);
    }
    for row in w {
        m.push(row.clone());
        d.push(Expr::zero());
    }
    let inv = symlin::inverse(&m)?;
    Some(
        inv.iter()
            .map(|row| {
                Expr::Add(row.iter().enumerate().map(|(j, c)| c * &(Expr::var(j) - &d[j])).collect()).normalize()
            })
            .collect(),
    )
}

/// `φ(z₂) = −b(0, z₂)/a(0, z₂)` with `f₂(0, z₂)`; expressions use `x1..xk` for `z₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IMOutput {
    pub phi: Expr,
    pub a0: Expr,
    pub b0: Expr,
    pub f2: VectorField,
    /// Grade of the nonvanishing check on `a(0, z₂)`.
    pub denominator: Grade,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Sample>,
    pub params: Vec<String>,
    pub values: ParamValues,
}

impl IMOutput {
    pub fn dim(&self) -> usize {
        self.f2.dim()
    }

    pub fn to_im_system(&self) -> ImSystem {
        ImSystem { f2: self.f2.clone(), phi: self.phi.clone(), values: self.values.clone() }
    }

    /// `(F, φ)` with `f₂(0, z₂) = F z₂` and `φ(z₂) = φ · z₂` once parameters are
    /// bound; `None` when either map has nonlinear terms or a nonzero offset.
    pub fn linear_parts(&self) -> Option<(DMatrix<f64>, Vec<f64>)> {
        let k = self.dim();
        let num = |e: &Expr| e.normalize().as_rational().map(|c| crate::expr::rational_to_f64(&c));
        let linear = |e: &Expr| -> Option<Vec<f64>> {
            let (coeffs, offset) = e.bind_params(&self.values).normalize().affine_parts(k)?;
            if !offset.normalize().is_zero_const() {
                return None;
            }
            coeffs.iter().map(num).collect()
        };
        let mut f = DMatrix::zeros(k, k);
        for i in 0..k {
            for (j, c) in linear(self.f2.component(i))?.into_iter().enumerate() {
                f[(i, j)] = c;
            }
        }
        Some((f, linear(&self.phi)?))
    }
}

pub fn internal_model_output(nf: &NormalForm) -> Result<IMOutput, NformError> {
    let (Some(a), Some(b), Some(f2)) = (&nf.a, &nf.b, &nf.f2) else {
        return Err(NformError::NonAffineCoordinates);
    };
    let r = nf.r;
    let at_zero = |e: &Expr| e.substitute_vars(&|i| if i < r { Expr::zero() } else { Expr::var(i - r) });
    let a0 = at_zero(a);
    let b0 = at_zero(b);
    if a0.is_zero_const() {
        return Err(NformError::ZeroGain);
    }
    let phi = (-(b0.clone()) / a0.clone()).normalize();
    let f2_0 = VectorField::new(f2.components().iter().map(at_zero).collect());

    let (denominator, witness) = denominator_check(nf, &a0)?;
    Ok(IMOutput {
        phi,
        a0,
        b0,
        f2: f2_0,
        denominator,
        witness,
        params: nf.params.clone(),
        values: nf.values.clone(),
    })
}

/// Samples `a(0, z₂)` at `z₂ = W x` for `x` drawn from the working domain.
fn denominator_check(nf: &NormalForm, a0: &Expr) -> Result<(Grade, Option<Sample>), ExprError> {
    let bound = a0.bind_params(&nf.values);
    if bound.as_rational().is_some() {
        return Ok(if bound.is_zero_const() {
            (Grade::Failed, None)
        } else {
            (Grade::Proven, None)
        });
    }
    let cfg = nf.sample_config().with_samples(64);
    let pts = sample_values(&Expr::zero(), &cfg)?;
    let mut sign = 0.0f64;
    for s in pts {
        let z2 = nf
            .z2
            .iter()
            .map(|c| c.eval(&s.point, &s.params))
            .collect::<Result<Vec<f64>, _>>()?;
        let v = a0.eval(&z2, &s.params)?;
        if v.abs() <= WITNESS_THRESHOLD || (sign != 0.0 && v.signum() != sign) {
            return Ok((Grade::Unknown, Some(Sample { point: z2, params: s.params, value: v })));
        }
        sign = v.signum();
    }
    Ok((Grade::Sampled, None))
}
