//! Univariate polynomials and rational functions in `s`, exact over the
//! rationals or approximate over `f64`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Neg;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use num_traits::{Num, Zero};
use serde::{Serialize, Serializer};

use super::LinError;
use crate::expr::{rational_from_f64, rational_to_f64, Rational};

/// Coefficient field for [`Poly`].
pub trait Coeff: Clone + fmt::Debug + fmt::Display + PartialEq + Num + Neg<Output = Self> + Send + Sync {
    /// Arithmetic is exact, so gcds and divisibility are decided exactly.
    const EXACT: bool;
    fn to_f64(&self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Coeff for Rational {
    const EXACT: bool = true;
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn from_f64(v: f64) -> Self {
        rational_from_f64(v)
    }
}

impl Coeff for f64 {
    const EXACT: bool = false;
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Tolerance for pairing roots when deciding cancellations numerically.
pub const PAIRING_TOL: f64 = 1e-6;

/// Polynomial with ascending coefficients; no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Poly<T: Coeff> {
    coeffs: Vec<T>,
}

pub type RPoly = Poly<Rational>;

impl<T: Coeff> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Poly::new(vec![c])
    }

    pub fn one() -> Self {
        Poly::constant(T::one())
    }

    /// `c · s^k`.
    pub fn monomial(c: T, k: usize) -> Self {
        let mut v = vec![T::zero(); k + 1];
        v[k] = c;
        Poly::new(v)
    }

    /// The indeterminate `s`.
    pub fn s() -> Self {
        Poly::monomial(T::one(), 1)
    }

    /// Monic polynomial with the given real roots.
    pub fn from_real_roots(roots: &[T]) -> Self {
        roots
            .iter()
            .fold(Poly::one(), |acc, r| acc.mul(&Poly::new(vec![-r.clone(), T::one()])))
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> T {
        self.coeffs.last().cloned().unwrap_or_else(T::zero)
    }

    pub fn is_monic(&self) -> bool {
        self.lead().is_one()
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(&(T::one() / self.lead()))
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn neg(&self) -> Self {
        Poly::new(self.coeffs.iter().cloned().map(Neg::neg).collect())
    }

    pub fn scale(&self, c: &T) -> Self {
        Poly::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly::new(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Poly::one(), |acc, _| acc.mul(self))
    }

    /// Euclidean division `self = quot · divisor + rem` with `deg rem < deg divisor`.
    pub fn divmod(&self, divisor: &Self) -> Result<(Self, Self), LinError> {
        let dd = divisor.degree().ok_or(LinError::DivisionByZero)?;
        let lead = divisor.lead();
        let mut rem = self.coeffs.clone();
        let Some(dn) = self.degree() else {
            return Ok((Poly::zero(), Poly::zero()));
        };
        if dn < dd {
            return Ok((Poly::zero(), self.clone()));
        }
        let mut quot = vec![T::zero(); dn - dd + 1];
        for k in (0..=dn - dd).rev() {
            let c = rem[k + dd].clone() / lead.clone();
            if c.is_zero() {
                continue;
            }
            for (j, b) in divisor.coeffs.iter().enumerate() {
                rem[k + j] = rem[k + j].clone() - c.clone() * b.clone();
            }
            // Exact cancellation of the leading term even in floating point.
            rem[k + dd] = T::zero();
            quot[k] = c;
        }
        rem.truncate(dd);
        Ok((Poly::new(quot), Poly::new(rem)))
    }

    /// Monic greatest common divisor (meaningful for exact coefficients).
    pub fn gcd(&self, other: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let (_, r) = a.divmod(&b).expect("nonzero divisor");
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> Self {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.clone() * T::from_f64(k as f64))
                .collect(),
        )
    }

    pub fn eval(&self, s: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * s.clone() + c.clone())
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c.to_f64())
    }

    pub fn to_f64(&self) -> Poly<f64> {
        Poly::new(self.coeffs.iter().map(Coeff::to_f64).collect())
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.to_f64().powi(2)).sum::<f64>().sqrt()
    }

    /// Multiplicity of the root `s = 0`.
    pub fn zero_root_multiplicity(&self) -> usize {
        self.coeffs.iter().take_while(|c| c.is_zero()).count()
    }
}

impl<T: Coeff> fmt::Display for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let neg = c.to_f64() < 0.0;
            let mag = if neg { -c.clone() } else { c.clone() };
            match (first, neg) {
                (true, true) => write!(f, "-")?,
                (false, true) => write!(f, " - ")?,
                (false, false) => write!(f, " + ")?,
                (true, false) => {}
            }
            first = false;
            let mono = match k {
                0 => String::new(),
                1 => "s".to_string(),
                _ => format!("s^{k}"),
            };
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{mag}*{mono}")?;
            }
        }
        Ok(())
    }
}

/// Serialized as ascending `f64` coefficients.
impl<T: Coeff> Serialize for Poly<T> {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_seq(self.coeffs.iter().map(Coeff::to_f64))
    }
}

impl RPoly {
    pub fn from_i64(coeffs: &[i64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| Rational::from_integer(c.into())).collect())
    }

    pub fn from_f64_exact(coeffs: &[f64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| rational_from_f64(c)).collect())
    }

    /// Coefficients as exact strings, ascending.
    pub fn exact_coeffs(&self) -> Vec<String> {
        self.coeffs.iter().map(ToString::to_string).collect()
    }
}

/// Roots of `p` as eigenvalues of its balanced companion matrix, polished by
/// Newton steps and sorted by (real, imaginary) part.
pub fn poly_roots<T: Coeff>(p: &Poly<T>) -> Result<Vec<Complex64>, LinError> {
    let deg = p.degree().ok_or(LinError::DivisionByZero)?;
    let zeros = p.zero_root_multiplicity();
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let reduced: Vec<f64> = p.coeffs()[zeros..].iter().map(Coeff::to_f64).collect();
    let d = deg - zeros;
    if d > 0 {
        let lead = reduced[d];
        let mut m = DMatrix::<f64>::zeros(d, d);
        for i in 1..d {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..d {
            m[(i, d - 1)] = -reduced[i] / lead;
        }
        balance(&mut m);
        let schur = Schur::try_new(m, f64::EPSILON, 10_000)
            .ok_or_else(|| LinError::Numerical(format!("eigenvalue iteration did not converge for {p}")))?;
        let fp = Poly::new(reduced);
        let dfp = fp.derivative();
        for z in schur.complex_eigenvalues().iter() {
            roots.push(polish(&fp, &dfp, *z));
        }
    }
    roots.sort_by(cmp_complex);
    Ok(roots)
}

fn cmp_complex(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

fn polish(p: &Poly<f64>, dp: &Poly<f64>, mut z: Complex64) -> Complex64 {
    let mut best = p.eval_complex(z).norm();
    for _ in 0..8 {
        let d = dp.eval_complex(z);
        if d.norm() == 0.0 {
            break;
        }
        let next = z - p.eval_complex(z) / d;
        let r = p.eval_complex(next).norm();
        if !(r < best) {
            break;
        }
        best = r;
        z = next;
    }
    z
}

/// Diagonal similarity by powers of two equalizing row and column norms.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            while cc < r / radix {
                f *= radix;
                cc *= radix * radix;
            }
            while cc >= r * radix {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r / (f * f)) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Greedy nearest pairing of two root lists. Returns matched index pairs
/// (distance ≤ `tol`) in order of increasing distance.
pub fn pair_roots(a: &[Complex64], b: &[Complex64], tol: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let d = (x - y).norm();
            if d <= tol {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Monic real polynomial with the given roots (conjugates assumed present).
pub fn poly_from_roots<T: Coeff>(roots: &[Complex64]) -> Poly<T> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, a) in c.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= a * r;
        }
        c = next;
    }
    Poly::new(c.into_iter().map(|z| T::from_f64(z.re)).collect())
}

/// Quotient `num / den` with a monic denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(bound = "")]
pub struct RationalFn<T: Coeff> {
    pub num: Poly<T>,
    pub den: Poly<T>,
    /// Common factors have been cancelled.
    pub reduced: bool,
}

pub type RRationalFn = RationalFn<Rational>;

impl<T: Coeff> RationalFn<T> {
    /// Builds `num / den` and cancels common factors: exactly by gcd for
    /// exact coefficients, by root pairing within [`PAIRING_TOL`] otherwise.
    pub fn new(num: Poly<T>, den: Poly<T>) -> Result<Self, LinError> {
        if den.is_zero() {
            return Err(LinError::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(RationalFn { num, den: Poly::one(), reduced: true });
        }
        let (num, den) = if T::EXACT {
            let g = num.gcd(&den);
            (num.divmod(&g)?.0, den.divmod(&g)?.0)
        } else {
            cancel_numeric(&num, &den)?
        };
        let lead = den.lead();
        Ok(RationalFn {
            num: num.scale(&(T::one() / lead.clone())),
            den: den.scale(&(T::one() / lead)),
            reduced: true,
        })
    }

    pub fn poly(p: Poly<T>) -> Self {
        RationalFn { num: p, den: Poly::one(), reduced: true }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_strictly_proper(&self) -> bool {
        match (self.num.degree(), self.den.degree()) {
            (None, _) => true,
            (Some(a), Some(b)) => a < b,
            _ => false,
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LinError> {
        RationalFn::new(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinError> {
        RationalFn::new(
            self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn recip(&self) -> Result<Self, LinError> {
        RationalFn::new(self.den.clone(), self.num.clone())
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.num.eval_complex(s) / self.den.eval_complex(s)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>, LinError> {
        poly_roots(&self.den)
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>, LinError> {
        if self.num.is_zero() {
            return Ok(Vec::new());
        }
        poly_roots(&self.num)
    }
}

impl<T: Coeff> fmt::Display for RationalFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

fn cancel_numeric<T: Coeff>(num: &Poly<T>, den: &Poly<T>) -> Result<(Poly<T>, Poly<T>), LinError> {
    let zn = poly_roots(num)?;
    let zd = poly_roots(den)?;
    let pairs = pair_roots(&zn, &zd, PAIRING_TOL);
    if pairs.is_empty() {
        return Ok((num.clone(), den.clone()));
    }
    let keep_n: Vec<Complex64> = (0..zn.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).map(|i| zn[i]).collect();
    let keep_d: Vec<Complex64> = (0..zd.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).map(|j| zd[j]).collect();
    let n = poly_from_roots::<T>(&keep_n).scale(&num.lead());
    let d = poly_from_roots::<T>(&keep_d).scale(&den.lead());
    Ok((n, d))
}
