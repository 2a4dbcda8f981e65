//! Vector fields, Lie derivatives and brackets, relative degree, and the
//! structural hypotheses (uniform relative degree, completeness and
//! commutativity of the normalized iterated brackets) on input-affine
//! systems `x' = f(x) + u g(x)`, `y = h(x)`.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{
    is_zero_with, parse, sample_values, Expr, ExprError, ParamValues, Sample, SampleConfig, ZeroStatus,
    WITNESS_THRESHOLD,
};
use crate::grade::Grade;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VfieldError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("relative degree undetermined: {0}")]
    Inconclusive(String),
    #[error("L_g L_f^(r-1) h vanishes identically; a uniform relative degree {r} does not hold")]
    DegenerateGain { r: usize },
}

/// A vector field on R^n given componentwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct VectorField {
    components: Vec<Expr>,
}

impl VectorField {
    /// Builds a field from its components, normalizing each one.
    pub fn new(components: Vec<Expr>) -> Self {
        VectorField {
            components: components.iter().map(Expr::normalize).collect(),
        }
    }

    pub fn zero(n: usize) -> Self {
        VectorField { components: vec![Expr::zero(); n] }
    }

    pub fn parse(components: &[&str], n: usize, params: &[&str]) -> Result<Self, ExprError> {
        Ok(VectorField {
            components: components
                .iter()
                .map(|c| parse(c, n, params))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.components[i]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero_const)
    }

    /// No component depends on the state.
    pub fn is_constant(&self) -> bool {
        !self.components.iter().any(Expr::depends_on_state)
    }

    /// Every component has the form `m · x + v` with state-free `m`, `v`.
    pub fn is_linear_affine(&self) -> bool {
        let n = self.dim();
        self.components.iter().all(|c| c.affine_parts(n).is_some())
    }

    /// Jacobian rows `∂X_i/∂x_j`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        let n = self.dim();
        self.components.iter().map(|c| c.gradient(n)).collect()
    }

    pub fn scale(&self, k: &Expr) -> VectorField {
        VectorField::new(self.components.iter().map(|c| k * c).collect())
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn eval(&self, x: &[f64], params: &ParamValues) -> Result<Vec<f64>, ExprError> {
        self.components.iter().map(|c| c.eval(x, params)).collect()
    }

    pub fn bind_params(&self, values: &ParamValues) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| c.bind_params(values)).collect(),
        }
    }
}

/// `L_X h = ∇h · X`.
pub fn lie_derivative(h: &Expr, x: &VectorField) -> Expr {
    let terms: Vec<Expr> = x
        .components()
        .iter()
        .enumerate()
        .filter(|(_, xi)| !xi.is_zero_const())
        .map(|(i, xi)| h.differentiate(i) * xi)
        .collect();
    Expr::Add(terms).normalize()
}

/// `[X, Y] = (DY) X − (DX) Y`, so that `[Ax, Bx] = (BA − AB) x`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> VectorField {
    VectorField::new(
        (0..x.dim())
            .map(|i| lie_derivative(y.component(i), x) - lie_derivative(x.component(i), y))
            .collect(),
    )
}

/// Outcome of the origin conditions `f(0) = 0`, `h(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OriginCheck {
    Holds,
    /// Holds for the bound parameter values but not symbolically.
    HoldsForBoundValues,
    /// Could not be decided; recorded as asserted by the user.
    UserAsserted,
    /// Fails; kept as a warning since a shift of coordinates restores it.
    Violated,
}

/// Input-affine system `x' = f(x) + u g(x)`, `y = h(x)`.
#[derive(Debug, Clone, Serialize)]
pub struct AffineSystem {
    pub f: VectorField,
    pub g: VectorField,
    pub h: Expr,
    pub params: Vec<String>,
    /// Numeric values for some or all parameters.
    pub values: ParamValues,
    /// Optional box confining sampling, one interval per coordinate.
    pub domain: Option<Vec<(f64, f64)>>,
    pub origin: OriginCheck,
}

impl AffineSystem {
    pub fn new(
        f: VectorField,
        g: VectorField,
        h: Expr,
        params: Vec<String>,
        values: ParamValues,
        domain: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, VfieldError> {
        let n = f.dim();
        if n == 0 {
            return Err(VfieldError::Dimension("state dimension must be positive".into()));
        }
        if g.dim() != n {
            return Err(VfieldError::Dimension(format!("f has {n} components, g has {}", g.dim())));
        }
        let all = f.components().iter().chain(g.components()).chain(std::iter::once(&h));
        for e in all {
            if let Some(m) = e.max_var() {
                if m >= n {
                    return Err(VfieldError::Dimension(format!("`{e}` references x{}", m + 1)));
                }
            }
            if let Some(p) = e.params().into_iter().find(|p| !params.contains(p)) {
                return Err(VfieldError::Expr(ExprError::UnknownIdentifier { name: p, offset: 0 }));
            }
        }
        if let Some(d) = &domain {
            if d.len() != n || d.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(VfieldError::Dimension("domain needs one nonempty interval per coordinate".into()));
            }
        }
        let mut sys = AffineSystem {
            f,
            g,
            h: h.normalize(),
            params,
            values,
            domain,
            origin: OriginCheck::Holds,
        };
        sys.origin = sys.check_origin();
        Ok(sys)
    }

    pub fn parse(
        f: &[&str],
        g: &[&str],
        h: &str,
        params: &[&str],
        values: ParamValues,
        domain: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, VfieldError> {
        let n = f.len();
        AffineSystem::new(
            VectorField::parse(f, n, params)?,
            VectorField::parse(g, n, params)?,
            parse(h, n, params)?,
            params.iter().map(|s| s.to_string()).collect(),
            values,
            domain,
        )
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    fn check_origin(&self) -> OriginCheck {
        let at_zero: Vec<Expr> = self
            .f
            .components()
            .iter()
            .chain(std::iter::once(&self.h))
            .map(|e| e.substitute_vars(&|_| Expr::zero()))
            .collect();
        if at_zero.iter().all(Expr::is_zero_const) {
            return OriginCheck::Holds;
        }
        if at_zero.iter().any(|e| e.as_rational().is_some() && !e.is_zero_const()) {
            return OriginCheck::Violated;
        }
        let bound: Vec<Expr> = at_zero.iter().map(|e| e.bind_params(&self.values)).collect();
        if bound.iter().all(Expr::is_zero_const) {
            OriginCheck::HoldsForBoundValues
        } else if bound.iter().all(|e| e.as_rational().is_some()) {
            OriginCheck::Violated
        } else {
            OriginCheck::UserAsserted
        }
    }

    /// Sampling configuration honoring the domain box and bound parameters.
    pub fn sample_config(&self, seed: u64) -> SampleConfig {
        SampleConfig::new(seed)
            .with_box(self.domain.clone().unwrap_or_default())
            .with_params(self.values.clone())
            .with_dim(self.dim())
    }

    /// `L_f^k h` for `k = 0..=upto`.
    pub fn output_derivatives(&self, upto: usize) -> Vec<Expr> {
        let mut out = vec![self.h.clone()];
        for _ in 0..upto {
            let next = lie_derivative(out.last().unwrap(), &self.f);
            out.push(next);
        }
        out
    }

    pub fn all_params_bound(&self) -> bool {
        self.params.iter().all(|p| self.values.contains_key(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum RelDegreeValue {
    Uniform { r: usize },
    NoUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelDegree {
    pub value: RelDegreeValue,
    /// `L_f^k h` for `k = 0..r-1` (or up to the last tested order).
    pub chain: Vec<Expr>,
    /// `L_g L_f^{r-1} h`, the candidate gain.
    pub gain: Expr,
    pub gain_status: ZeroStatus,
    /// Verdicts for `L_g L_f^k h ≡ 0`, `k < r - 1`.
    pub vanishing: Vec<ZeroStatus>,
    pub grade: Grade,
    /// Point where the gain vanishes, when it does.
    pub root_witness: Option<Sample>,
}

impl RelDegree {
    pub fn r(&self) -> Option<usize> {
        match self.value {
            RelDegreeValue::Uniform { r } => Some(r),
            RelDegreeValue::NoUniform => None,
        }
    }
}

fn locate_root(e: &Expr, a: &Sample, b: &Sample) -> Option<Sample> {
    let point_at = |t: f64| -> (Vec<f64>, ParamValues) {
        let x = a.point.iter().zip(&b.point).map(|(p, q)| p + t * (q - p)).collect();
        let params = a
            .params
            .iter()
            .map(|(k, v)| (k.clone(), v + t * (b.params.get(k).copied().unwrap_or(*v) - v)))
            .collect();
        (x, params)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let sign_lo = a.value.signum();
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (x, p) = point_at(mid);
        let v = e.eval(&x, &p).ok()?;
        if v == 0.0 {
            return Some(Sample { point: x, params: p, value: v });
        }
        if v.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x, p) = point_at(0.5 * (lo + hi));
    let value = e.eval(&x, &p).ok()?;
    Some(Sample { point: x, params: p, value })
}

/// Two points with the same parameter values where `e` takes opposite signs.
/// Each sample's parameters are paired with every sampled state, so a gain
/// whose sign depends only on the parameters is not a root.
fn sign_change(e: &Expr, samples: &[Sample]) -> Option<(Sample, Sample)> {
    samples.iter().find_map(|s| {
        samples.iter().find_map(|t| {
            let value = e.eval(&t.point, &s.params).ok()?;
            (value != 0.0 && value.signum() != s.value.signum())
                .then(|| (s.clone(), Sample { point: t.point.clone(), params: s.params.clone(), value }))
        })
    })
}

/// Smallest `r` with `L_g L_f^k h ≡ 0` for `k < r − 1` and
/// `L_g L_f^{r−1} h` nowhere zero on the sampling domain.
pub fn relative_degree(sys: &AffineSystem, seed: u64) -> Result<RelDegree, VfieldError> {
    let n = sys.dim();
    let cfg = sys.sample_config(seed);
    let mut grade = Grade::Proven;
    let mut chain = vec![sys.h.clone()];
    let mut vanishing = Vec::new();
    for k in 0..n {
        let current = chain.last().unwrap().clone();
        let gain = lie_derivative(&current, &sys.g);
        let status = is_zero_with(&gain, &cfg)?;
        if status.is_zero() {
            if !status.is_proven() {
                grade = grade.weakest(Grade::Sampled);
            }
            vanishing.push(status);
            if k + 1 < n {
                chain.push(lie_derivative(&current, &sys.f));
            }
            continue;
        }
        let r = k + 1;
        if let ZeroStatus::ProvenNonzeroConstant { .. } = status {
            return Ok(RelDegree {
                value: RelDegreeValue::Uniform { r },
                chain,
                gain,
                gain_status: status,
                vanishing,
                grade,
                root_witness: None,
            });
        }
        let samples = sample_values(&gain, &cfg.clone().with_samples(64))?;
        if let Some(tiny) = samples.iter().find(|s| s.value.abs() <= WITNESS_THRESHOLD) {
            return Err(VfieldError::Inconclusive(format!(
                "L_g L_f^{k} h = {gain} is near zero ({:.3e}) at a sample point",
                tiny.value
            )));
        }
        if let Some((p, q)) = sign_change(&gain, &samples) {
            let witness = locate_root(&gain, &p, &q).unwrap_or(p);
            return Ok(RelDegree {
                value: RelDegreeValue::NoUniform,
                chain,
                gain,
                gain_status: status,
                vanishing,
                grade: Grade::Failed,
                root_witness: Some(witness),
            });
        }
        return Ok(RelDegree {
            value: RelDegreeValue::Uniform { r },
            chain,
            gain,
            gain_status: status,
            vanishing,
            grade: grade.weakest(Grade::Sampled),
            root_witness: None,
        });
    }
    let gain = chain.last().map(|c| lie_derivative(c, &sys.g)).unwrap_or_default();
    Ok(RelDegree {
        value: RelDegreeValue::NoUniform,
        chain,
        gain,
        gain_status: ZeroStatus::ProvenZero,
        vanishing,
        grade: Grade::Failed,
        root_witness: None,
    })
}

/// Normalized fields built from a system of relative degree `r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauFields {
    pub g_tilde: VectorField,
    pub f_tilde: VectorField,
    /// `τ_1 = g̃`, `τ_{i+1} = [f̃, τ_i]`.
    pub taus: Vec<VectorField>,
}

pub fn tau_fields(sys: &AffineSystem, r: usize) -> Result<TauFields, VfieldError> {
    if r == 0 || r > sys.dim() {
        return Err(VfieldError::Dimension(format!("relative degree {r} outside 1..={}", sys.dim())));
    }
    let derivs = sys.output_derivatives(r);
    let gain = lie_derivative(&derivs[r - 1], &sys.g);
    if gain.is_zero_const() {
        return Err(VfieldError::DegenerateGain { r });
    }
    let inv = gain.powi(-1);
    let g_tilde = sys.g.scale(&inv);
    let f_tilde = sys.f.sub(&g_tilde.scale(&derivs[r]));
    let mut taus = vec![g_tilde.clone()];
    for _ in 1..r {
        let next = lie_bracket(&f_tilde, taus.last().unwrap());
        taus.push(next);
    }
    Ok(TauFields { g_tilde, f_tilde, taus })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum Completeness {
    /// Constant fields are complete.
    ProvenConstant,
    /// Linear-affine fields `M x + v` are complete.
    ProvenLinearAffine,
    Unknown,
}

impl Completeness {
    pub fn grade(&self) -> Grade {
        match self {
            Completeness::Unknown => Grade::Unknown,
            _ => Grade::Proven,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum Commutativity {
    Proven,
    Sampled,
    Failed {
        i: usize,
        j: usize,
        component: usize,
        bracket: Expr,
        witness: Option<Sample>,
    },
    NotApplicable,
}

impl Commutativity {
    pub fn grade(&self) -> Grade {
        match self {
            Commutativity::Proven => Grade::Proven,
            Commutativity::Sampled => Grade::Sampled,
            Commutativity::Failed { .. } => Grade::Failed,
            Commutativity::NotApplicable => Grade::Unknown,
        }
    }
}

pub fn completeness(field: &VectorField) -> Completeness {
    if field.is_constant() {
        Completeness::ProvenConstant
    } else if field.is_linear_affine() {
        Completeness::ProvenLinearAffine
    } else {
        Completeness::Unknown
    }
}

/// Pairwise bracket test over a list of fields (indices in reports are 1-based).
pub fn commutativity(fields: &[VectorField], cfg: &SampleConfig) -> Result<Commutativity, ExprError> {
    let mut sampled = false;
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let br = lie_bracket(&fields[i], &fields[j]);
            for (c, comp) in br.components().iter().enumerate() {
                match is_zero_with(comp, cfg)? {
                    ZeroStatus::ProvenZero => {}
                    ZeroStatus::SampledZero { .. } => sampled = true,
                    ZeroStatus::ProvenNonzeroConstant { .. } => {
                        return Ok(Commutativity::Failed {
                            i: i + 1,
                            j: j + 1,
                            component: c + 1,
                            bracket: comp.clone(),
                            witness: None,
                        })
                    }
                    ZeroStatus::SampledNonzero { witness } => {
                        return Ok(Commutativity::Failed {
                            i: i + 1,
                            j: j + 1,
                            component: c + 1,
                            bracket: comp.clone(),
                            witness: Some(witness),
                        })
                    }
                }
            }
        }
    }
    Ok(if sampled { Commutativity::Sampled } else { Commutativity::Proven })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub relative_degree: RelDegree,
    pub tau: Option<TauFields>,
    pub completeness: Vec<Completeness>,
    pub commutativity: Commutativity,
    pub origin: OriginCheck,
    pub grade: Grade,
}

pub fn check_assumptions(sys: &AffineSystem, seed: u64) -> Result<AssumptionReport, VfieldError> {
    let rd = relative_degree(sys, seed)?;
    let Some(r) = rd.r() else {
        return Ok(AssumptionReport {
            grade: Grade::Failed,
            relative_degree: rd,
            tau: None,
            completeness: Vec::new(),
            commutativity: Commutativity::NotApplicable,
            origin: sys.origin,
        });
    };
    let tau = tau_fields(sys, r)?;
    let complete: Vec<Completeness> = tau.taus.iter().map(completeness).collect();
    let comm = commutativity(&tau.taus, &sys.sample_config(seed))?;
    let grade = Grade::combine(
        std::iter::once(rd.grade)
            .chain(complete.iter().map(Completeness::grade))
            .chain(std::iter::once(comm.grade())),
    );
    Ok(AssumptionReport {
        relative_degree: rd,
        tau: Some(tau),
        completeness: complete,
        commutativity: comm,
        origin: sys.origin,
        grade,
    })
}
