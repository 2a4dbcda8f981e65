//! Transfer functions, the feedback decomposition `S = 1/(a + b/p)`, the
//! stability test on `G·S` and internal-model extraction for linear plants.

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::Serialize;

use super::poly::{pair_roots, poly_roots, Coeff, Poly, RPoly, RRationalFn, RationalFn, PAIRING_TOL};
use super::{LinError, RMatrix};
use crate::expr::{rational_to_f64, Expr, ParamValues, Rational};
use crate::vfield::{AffineSystem, VectorField, VfieldError};

/// Default margin for "negative real part".
pub const DEFAULT_EPS_STAB: f64 = 1e-9;

/// `x' = A x + u b`, `y = c x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinSys {
    pub a: RMatrix,
    pub b: Vec<Rational>,
    pub c: Vec<Rational>,
}

impl LinSys {
    pub fn new(a: RMatrix, b: Vec<Rational>, c: Vec<Rational>) -> Result<Self, LinError> {
        let n = a.nrows();
        if n == 0 || !a.is_square() || b.len() != n || c.len() != n {
            return Err(LinError::Dimension(format!(
                "A is {}x{}, b has {}, c has {} entries",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        Ok(LinSys { a, b, c })
    }

    pub fn from_f64(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Self, LinError> {
        if a.iter().any(|r| r.len() != a.len()) {
            return Err(LinError::Dimension("A must be square".into()));
        }
        LinSys::new(
            RMatrix::from_f64(a),
            b.iter().map(|&v| Coeff::from_f64(v)).collect(),
            c.iter().map(|&v| Coeff::from_f64(v)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `c A^k b`.
    pub fn markov(&self, k: usize) -> Rational {
        let mut v = self.b.clone();
        for _ in 0..k {
            v = self.a.mul_vec(&v);
        }
        self.c.iter().zip(&v).map(|(x, y)| x * y).sum()
    }

    /// Smallest `r ≤ n` with `c A^{r-1} b ≠ 0`.
    pub fn relative_degree(&self) -> Option<usize> {
        (0..self.dim()).find(|&k| !self.markov(k).is_zero()).map(|k| k + 1)
    }

    /// Controllable canonical realization of `num / den` (`den` monic,
    /// `deg num < deg den`): companion state matrix, input on the last
    /// coordinate, output row equal to the numerator coefficients.
    pub fn controller_form(num: &RPoly, den: &RPoly) -> Result<Self, LinError> {
        let l = den.degree().filter(|&d| d >= 1 && den.is_monic()).ok_or_else(|| {
            LinError::BadExosystemPolynomial(den.to_string())
        })?;
        if num.degree().is_some_and(|d| d >= l) {
            return Err(LinError::NotStrictlyProper);
        }
        let mut a = RMatrix::zeros(l, l);
        for i in 0..l - 1 {
            a[(i, i + 1)] = Rational::one();
        }
        for j in 0..l {
            a[(l - 1, j)] = -den.coeff(j);
        }
        let mut b = vec![Rational::zero(); l];
        b[l - 1] = Rational::one();
        let c = (0..l).map(|j| num.coeff(j)).collect();
        LinSys::new(a, b, c)
    }

    /// The same plant as an input-affine system with linear fields.
    pub fn to_affine(&self) -> Result<AffineSystem, VfieldError> {
        let n = self.dim();
        let linear = |row: &[Rational]| -> Expr {
            Expr::Add(
                row.iter()
                    .enumerate()
                    .map(|(j, v)| Expr::Const(v.clone()) * Expr::var(j))
                    .collect(),
            )
            .normalize()
        };
        let f = VectorField::new((0..n).map(|i| linear(&self.a.row(i))).collect());
        let g = VectorField::new(self.b.iter().map(|v| Expr::Const(v.clone())).collect());
        AffineSystem::new(f, g, linear(&self.c), Vec::new(), ParamValues::new(), None)
    }
}

impl Serialize for LinSys {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            a: &'a RMatrix,
            b: Vec<f64>,
            c: Vec<f64>,
        }
        Repr {
            a: &self.a,
            b: self.b.iter().map(rational_to_f64).collect(),
            c: self.c.iter().map(rational_to_f64).collect(),
        }
        .serialize(ser)
    }
}

/// `c (sI − A)^{-1} b` via the Faddeev–LeVerrier recurrence, reduced.
pub fn transfer_function(sys: &LinSys) -> Result<RRationalFn, LinError> {
    let n = sys.dim();
    let id = RMatrix::identity(n);
    // char poly s^n + c[n-1] s^{n-1} + ... + c[0]
    let mut charp = vec![Rational::zero(); n + 1];
    charp[n] = Rational::one();
    let mut num = vec![Rational::zero(); n];
    let mut m = id.clone();
    for k in 1..=n {
        if k > 1 {
            m = sys.a.mul(&m).add(&id.scale(&charp[n - k + 1]));
        }
        let cmb: Rational = sys.c.iter().zip(m.mul_vec(&sys.b)).map(|(x, y)| x * y).sum();
        num[n - k] = cmb;
        charp[n - k] = -sys.a.mul(&m).trace() / Rational::from_integer((k as i64).into());
    }
    RationalFn::new(Poly::new(num), Poly::new(charp))
}

/// `det(sI − A)` by the same recurrence.
pub fn characteristic_polynomial(a: &RMatrix) -> RPoly {
    let n = a.nrows();
    let id = RMatrix::identity(n);
    let mut charp = vec![Rational::zero(); n + 1];
    charp[n] = Rational::one();
    let mut m = id.clone();
    for k in 1..=n {
        if k > 1 {
            m = a.mul(&m).add(&id.scale(&charp[n - k + 1]));
        }
        charp[n - k] = -a.mul(&m).trace() / Rational::from_integer((k as i64).into());
    }
    Poly::new(charp)
}

/// `q = a·p + b` with `deg b < deg p`.
pub fn poly_divmod<T: Coeff>(q: &Poly<T>, p: &Poly<T>) -> Result<(Poly<T>, Poly<T>), LinError> {
    q.divmod(p)
}

/// `S = p/q` written as `1/(a + b/p)`: a forward block `1/a` with the
/// feedback block `fb = b/p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct FeedbackDecomposition<T: Coeff> {
    pub p: Poly<T>,
    pub q: Poly<T>,
    pub a: Poly<T>,
    pub b: Poly<T>,
    pub fb: RationalFn<T>,
    /// `b = 0`: no feedback path.
    pub trivial_feedback: bool,
}

pub fn feedback_decomposition<T: Coeff>(s: &RationalFn<T>) -> Result<FeedbackDecomposition<T>, LinError> {
    if s.num.is_zero() {
        return Err(LinError::ZeroNumerator);
    }
    if !s.is_strictly_proper() {
        return Err(LinError::NotStrictlyProper);
    }
    let (a, b) = poly_divmod(&s.den, &s.num)?;
    let fb = RationalFn::new(b.clone(), s.num.clone())?;
    Ok(FeedbackDecomposition {
        p: s.num.clone(),
        q: s.den.clone(),
        trivial_feedback: b.is_zero(),
        a,
        b,
        fb,
    })
}

/// Closes the loop: `1 / (a + fb)`, reduced.
pub fn reassemble<T: Coeff>(a: &Poly<T>, fb: &RationalFn<T>) -> Result<RationalFn<T>, LinError> {
    RationalFn::new(fb.den.clone(), a.mul(&fb.den).add(&fb.num))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct AdaptationCheck<T: Coeff> {
    pub stable: bool,
    /// `G·S` after cancellation.
    pub product: RationalFn<T>,
    pub poles: Vec<Complex64>,
    /// Poles of `G` and `S` removed by cancellation.
    pub cancelled: Vec<Complex64>,
    /// Remaining poles with real part ≥ −ε.
    pub offending: Vec<Complex64>,
    pub eps_stab: f64,
    pub pairing_tol: f64,
}

/// Is `G·S` stable once common factors cancel?
pub fn check_linear_adaptation<T: Coeff>(
    s: &RationalFn<T>,
    g: &RationalFn<T>,
    eps_stab: f64,
) -> Result<AdaptationCheck<T>, LinError> {
    let product = s.mul(g)?;
    let full = poly_roots(&s.den.mul(&g.den))?;
    let poles = product.poles()?;
    let matched = pair_roots(&full, &poles, PAIRING_TOL);
    let cancelled = (0..full.len())
        .filter(|i| !matched.iter().any(|m| m.0 == *i))
        .map(|i| full[i])
        .collect();
    let offending: Vec<Complex64> = poles.iter().copied().filter(|z| z.re >= -eps_stab).collect();
    Ok(AdaptationCheck {
        stable: offending.is_empty(),
        product,
        poles,
        cancelled,
        offending,
        eps_stab,
        pairing_tol: PAIRING_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearIMResult {
    pub s: RRationalFn,
    pub pi: RPoly,
    pub p: RPoly,
    pub q: RPoly,
    /// `p = π·p₀`.
    pub p0: RPoly,
    /// `q = a·p + b`.
    pub a: RPoly,
    pub b: RPoly,
    /// `b = b₁·b₂`.
    pub b1: RPoly,
    pub b2: RPoly,
    /// Controller form of `b₂/π`.
    pub realization: LinSys,
}

/// Checks `π | p` exactly and assembles the internal model `b₂/π`.
pub fn extract_internal_model_linear(s: &RRationalFn, pi: &RPoly, eps_stab: f64) -> Result<LinearIMResult, LinError> {
    if !pi.degree().is_some_and(|d| d >= 1) || !pi.is_monic() {
        return Err(LinError::BadExosystemPolynomial(pi.to_string()));
    }
    if let Some(z) = poly_roots(pi)?.into_iter().find(|z| z.re < -eps_stab) {
        return Err(LinError::StableMode { pi: pi.to_string(), root: format!("{z}") });
    }
    if s.num.is_zero() {
        return Err(LinError::ZeroNumerator);
    }
    let (p0, rem) = s.num.divmod(pi)?;
    if !rem.is_zero() {
        return Err(LinError::NoInternalModel {
            pi: pi.to_string(),
            p: s.num.to_string(),
            remainder: rem.to_string(),
        });
    }
    let (a, b) = s.den.divmod(&s.num)?;
    let b2 = RPoly::one();
    let realization = LinSys::controller_form(&b2, pi)?;
    Ok(LinearIMResult {
        s: s.clone(),
        pi: pi.clone(),
        p: s.num.clone(),
        q: s.den.clone(),
        p0,
        a,
        b1: b.clone(),
        b,
        b2,
        realization,
    })
}

/// Monic polynomial of least degree with `π(d/dt) θ(w(t)) ≡ 0` for every
/// trajectory of `w' = Q w`: the first linear dependency in `θ, θQ, θQ², …`.
pub fn output_annihilator(q: &RMatrix, theta: &[Rational]) -> Result<RPoly, LinError> {
    let m = q.nrows();
    if !q.is_square() || theta.len() != m {
        return Err(LinError::Dimension("Q must be square and θ must match it".into()));
    }
    let mut krylov: Vec<Vec<Rational>> = vec![theta.to_vec()];
    for k in 1..=m {
        let next = q.vec_mul(krylov.last().unwrap());
        // Columns are the previous rows θQ^i.
        let basis = RMatrix::from_rows((0..m).map(|j| krylov.iter().map(|r| r[j].clone()).collect()).collect());
        if let Some(c) = basis.solve(&next) {
            let mut coeffs: Vec<Rational> = c.into_iter().map(|v| -v).collect();
            coeffs.push(Rational::one());
            return Ok(Poly::new(coeffs));
        }
        debug_assert!(k < m + 1);
        krylov.push(next);
    }
    if theta.iter().all(Zero::is_zero) {
        return Ok(RPoly::one());
    }
    Err(LinError::Numerical("Krylov sequence failed to close".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> RPoly {
        RPoly::from_i64(c)
    }

    fn ratfn(num: &[i64], den: &[i64]) -> RRationalFn {
        RationalFn::new(p(num), p(den)).unwrap()
    }

    fn r(v: i64) -> Rational {
        Rational::from_integer(v.into())
    }

    #[test]
    fn first_order_transfer_function() {
        let sys = LinSys::new(RMatrix::from_i64(&[&[-1]]), vec![r(1)], vec![r(1)]).unwrap();
        assert_eq!(transfer_function(&sys).unwrap(), ratfn(&[1], &[1, 1]));
    }

    #[test]
    fn double_integrator_transfer_function() {
        let sys = LinSys::new(RMatrix::from_i64(&[&[0, 1], &[0, 0]]), vec![r(0), r(1)], vec![r(1), r(0)]).unwrap();
        assert_eq!(transfer_function(&sys).unwrap(), ratfn(&[1], &[0, 0, 1]));
    }

    #[test]
    fn unobservable_mode_cancels() {
        // diag(-1, -2) with c = [1, 0]: the -2 mode is invisible.
        let sys = LinSys::new(RMatrix::from_i64(&[&[-1, 0], &[0, -2]]), vec![r(1), r(1)], vec![r(1), r(0)]).unwrap();
        assert_eq!(transfer_function(&sys).unwrap(), ratfn(&[1], &[1, 1]));
    }

    #[test]
    fn feedback_examples() {
        let d = feedback_decomposition(&ratfn(&[0, 1], &[2, 3, 1])).unwrap();
        assert_eq!(d.a, p(&[3, 1]));
        assert_eq!(d.fb, ratfn(&[2], &[0, 1]));
        assert_eq!(reassemble(&d.a, &d.fb).unwrap(), ratfn(&[0, 1], &[2, 3, 1]));
        let d = feedback_decomposition(&ratfn(&[1], &[1, 1])).unwrap();
        assert!(d.trivial_feedback);
        assert_eq!(d.a, p(&[1, 1]));
        assert!(matches!(feedback_decomposition(&ratfn(&[0], &[1, 1])), Err(LinError::ZeroNumerator)));
    }

    #[test]
    fn adaptation_examples() {
        let g = ratfn(&[1], &[0, 1]);
        let ok = check_linear_adaptation(&ratfn(&[0, 1], &[2, 3, 1]), &g, DEFAULT_EPS_STAB).unwrap();
        assert!(ok.stable);
        assert_eq!(ok.cancelled, vec![Complex64::new(0.0, 0.0)]);
        let bad = check_linear_adaptation(&ratfn(&[1, 1], &[2, 3, 1]), &g, DEFAULT_EPS_STAB).unwrap();
        assert!(!bad.stable);
        assert_eq!(bad.offending.len(), 1);
        // zeros at ±2i, poles -1, -2, -3
        let s = RationalFn::new(p(&[4, 0, 1]), Poly::from_real_roots(&[r(-1), r(-2), r(-3)])).unwrap();
        let harmonic = check_linear_adaptation(&s, &ratfn(&[1], &[4, 0, 1]), DEFAULT_EPS_STAB).unwrap();
        assert!(harmonic.stable);
        assert_eq!(harmonic.cancelled.len(), 2);
    }

    #[test]
    fn internal_model_for_constants() {
        let s = RationalFn::new(p(&[0, 3, 1]), Poly::from_real_roots(&[r(-1), r(-2), r(-4)])).unwrap();
        let im = extract_internal_model_linear(&s, &p(&[0, 1]), DEFAULT_EPS_STAB).unwrap();
        assert_eq!(im.p0, p(&[3, 1]));
        assert_eq!(im.a.mul(&im.p).add(&im.b), im.q);
        assert_eq!(im.realization.a, RMatrix::from_i64(&[&[0]]));
        assert!(matches!(
            extract_internal_model_linear(&ratfn(&[1], &[1, 1]), &p(&[0, 1]), DEFAULT_EPS_STAB),
            Err(LinError::NoInternalModel { .. })
        ));
        assert!(matches!(
            extract_internal_model_linear(&s, &p(&[1, 1]), DEFAULT_EPS_STAB),
            Err(LinError::StableMode { .. })
        ));
    }

    #[test]
    fn internal_model_for_harmonics() {
        let s = RationalFn::new(p(&[4, 0, 1]), Poly::from_real_roots(&[r(-1), r(-2), r(-3)])).unwrap();
        let im = extract_internal_model_linear(&s, &p(&[4, 0, 1]), DEFAULT_EPS_STAB).unwrap();
        assert_eq!(im.p0, RPoly::one());
        assert_eq!(im.realization.a, RMatrix::from_i64(&[&[0, 1], &[-4, 0]]));
        assert_eq!(transfer_function(&im.realization).unwrap(), ratfn(&[1], &[4, 0, 1]));
    }

    #[test]
    fn annihilators() {
        let harmonic = RMatrix::from_i64(&[&[0, 1], &[-4, 0]]);
        assert_eq!(output_annihilator(&harmonic, &[r(1), r(0)]).unwrap(), p(&[4, 0, 1]));
        // θ sees only the constant mode of diag(0, -1).
        let diag = RMatrix::from_i64(&[&[0, 0], &[0, -1]]);
        assert_eq!(output_annihilator(&diag, &[r(1), r(0)]).unwrap(), p(&[0, 1]));
        assert_eq!(output_annihilator(&RMatrix::from_i64(&[&[0]]), &[r(1)]).unwrap(), p(&[0, 1]));
    }

    #[test]
    fn markov_relative_degree() {
        let sys = LinSys::new(
            RMatrix::from_i64(&[&[0, 1, 0], &[0, 0, 1], &[-6, -11, -6]]),
            vec![r(0), r(0), r(1)],
            vec![r(4), r(0), r(1)],
        )
        .unwrap();
        assert_eq!(sys.relative_degree(), Some(1));
        let sys2 = LinSys { c: vec![r(1), r(0), r(0)], ..sys };
        assert_eq!(sys2.relative_degree(), Some(3));
    }
}
