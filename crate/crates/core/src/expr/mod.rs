//! Symbolic scalar expressions over state variables and named parameters.
//!
//! Expressions are immutable trees. [`Expr::normalize`] maps any tree to a
//! canonical form (a reduced quotient of expanded polynomials whose
//! indeterminates are variables, parameters and function applications), so
//! structural equality of normalized expressions decides equality on the
//! polynomial/rational fragment.
//!
//! State variables are indexed from zero and printed as `x1..xN`.

mod canon;
mod compiled;
mod parse;
mod zero;

use std::collections::BTreeMap;
use std::fmt;
use std::ops;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compiled::CompiledExpr;
pub use parse::parse;
pub use zero::{is_zero, is_zero_with, sample_values, Sample, SampleConfig, ZeroStatus, WITNESS_THRESHOLD};

pub type Rational = num_rational::BigRational;

/// Numeric values for named parameters.
pub type ParamValues = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable x{index} at byte {offset} exceeds state dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize, offset: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("parameter `{0}` has no value")]
    UnboundParameter(String),
    #[error("zero test inconclusive: every one of {attempts} sample points failed to evaluate")]
    Inconclusive { attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        }
    }

    /// Exact value at a rational argument, when it is rational.
    fn exact_at(self, c: &Rational) -> Option<Rational> {
        match self {
            Func::Exp | Func::Cos if c.is_zero() => Some(Rational::one()),
            Func::Sin if c.is_zero() => Some(Rational::zero()),
            Func::Ln if c.is_one() => Some(Rational::zero()),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> Result<f64, String> {
        match self {
            Func::Exp => Ok(v.exp()),
            Func::Ln if v <= 0.0 => Err(format!("ln of nonpositive value {v}")),
            Func::Ln => Ok(v.ln()),
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
        }
    }
}

/// Symbolic scalar expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Rational),
    Var(usize),
    Param(String),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, i64),
    Call(Func, Box<Expr>),
}

impl Default for Expr {
    fn default() -> Self {
        Expr::zero()
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Rational::zero())
    }

    pub fn one() -> Expr {
        Expr::Const(Rational::one())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Const(Rational::from_integer(BigInt::from(n)))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        Expr::Const(Rational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(name.to_string())
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    pub fn powi(&self, k: i64) -> Expr {
        Expr::Pow(Box::new(self.clone()), k)
    }

    /// Canonical form; idempotent.
    pub fn normalize(&self) -> Expr {
        canon::to_ratfn(self).to_expr()
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    /// Rational value when the expression normalizes to a constant.
    pub fn as_rational(&self) -> Option<Rational> {
        canon::to_ratfn(self).as_constant()
    }

    /// Largest state index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut m: Option<usize> = None;
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                m = Some(m.map_or(*i, |c| c.max(*i)));
            }
        });
        m
    }

    pub fn depends_on_state(&self) -> bool {
        self.max_var().is_some()
    }

    pub fn depends_on_var(&self, i: usize) -> bool {
        let mut hit = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Var(j) if *j == i) {
                hit = true;
            }
        });
        hit
    }

    /// Sorted, de-duplicated parameter names.
    pub fn params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Param(p) = e {
                out.push(p.clone());
            }
        });
        out.sort();
        out.dedup();
        out
    }

    pub fn has_calls(&self) -> bool {
        let mut hit = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Call(..)) {
                hit = true;
            }
        });
        hit
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().for_each(|x| x.visit(f)),
            Expr::Pow(b, _) | Expr::Call(_, b) => b.visit(f),
            _ => {}
        }
    }

    /// Replaces every state variable `x_i` by `subs(i)`; the result is normalized.
    pub fn substitute_vars(&self, subs: &dyn Fn(usize) -> Expr) -> Expr {
        self.map_leaves(&|e| match e {
            Expr::Var(i) => Some(subs(*i)),
            _ => None,
        })
        .normalize()
    }

    /// Replaces bound parameters by the exact rational value of their `f64`.
    pub fn bind_params(&self, values: &ParamValues) -> Expr {
        self.map_leaves(&|e| match e {
            Expr::Param(p) => values.get(p).map(|v| Expr::Const(rational_from_f64(*v))),
            _ => None,
        })
        .normalize()
    }

    fn map_leaves(&self, f: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
        if let Some(r) = f(self) {
            return r;
        }
        match self {
            Expr::Add(xs) => Expr::Add(xs.iter().map(|x| x.map_leaves(f)).collect()),
            Expr::Mul(xs) => Expr::Mul(xs.iter().map(|x| x.map_leaves(f)).collect()),
            Expr::Pow(b, k) => Expr::Pow(Box::new(b.map_leaves(f)), *k),
            Expr::Call(g, a) => Expr::Call(*g, Box::new(a.map_leaves(f))),
            leaf => leaf.clone(),
        }
    }

    /// Exact partial derivative with respect to `x_i` (zero-based), normalized.
    pub fn differentiate(&self, i: usize) -> Expr {
        self.diff_raw(i).normalize()
    }

    fn diff_raw(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => Expr::zero(),
            Expr::Var(j) => {
                if *j == i {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.diff_raw(i)).collect()),
            Expr::Mul(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for k in 0..fs.len() {
                    if !fs[k].depends_on_var(i) {
                        continue;
                    }
                    let mut prod: Vec<Expr> = Vec::with_capacity(fs.len());
                    for (j, f) in fs.iter().enumerate() {
                        if j == k {
                            prod.push(f.diff_raw(i));
                        } else {
                            prod.push(f.clone());
                        }
                    }
                    terms.push(Expr::Mul(prod));
                }
                Expr::Add(terms)
            }
            Expr::Pow(b, k) => {
                if !b.depends_on_var(i) {
                    return Expr::zero();
                }
                Expr::Mul(vec![Expr::int(*k), b.powi(k - 1), b.diff_raw(i)])
            }
            Expr::Call(f, a) => {
                if !a.depends_on_var(i) {
                    return Expr::zero();
                }
                let da = a.diff_raw(i);
                let outer = match f {
                    Func::Exp => Expr::Call(Func::Exp, a.clone()),
                    Func::Ln => a.powi(-1),
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => Expr::Mul(vec![Expr::int(-1), Expr::Call(Func::Sin, a.clone())]),
                };
                Expr::Mul(vec![outer, da])
            }
        }
    }

    /// Gradient with respect to `x_0..x_{n-1}`.
    pub fn gradient(&self, n: usize) -> Vec<Expr> {
        (0..n).map(|i| self.differentiate(i)).collect()
    }

    /// Decomposes an expression affine in the state as `coeffs · x + offset`.
    /// Coefficients may depend on parameters but not on the state.
    pub fn affine_parts(&self, n: usize) -> Option<(Vec<Expr>, Expr)> {
        if self.max_var().is_some_and(|m| m >= n) {
            return None;
        }
        let coeffs = self.gradient(n);
        if coeffs.iter().any(Expr::depends_on_state) {
            return None;
        }
        let offset = self.substitute_vars(&|_| Expr::zero());
        Some((coeffs, offset))
    }

    /// IEEE double evaluation. `point[i]` is the value of `x_{i+1}`.
    pub fn eval(&self, point: &[f64], params: &ParamValues) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => c.to_f64().unwrap_or(f64::NAN),
            Expr::Var(i) => *point.get(*i).ok_or_else(|| ExprError::Domain {
                subexpr: self.to_string(),
                reason: format!("point has only {} coordinates", point.len()),
            })?,
            Expr::Param(p) => *params
                .get(p)
                .ok_or_else(|| ExprError::UnboundParameter(p.clone()))?,
            Expr::Add(ts) => {
                let mut s = 0.0;
                for t in ts {
                    s += t.eval(point, params)?;
                }
                s
            }
            Expr::Mul(fs) => {
                let mut s = 1.0;
                for f in fs {
                    s *= f.eval(point, params)?;
                }
                s
            }
            Expr::Pow(b, k) => {
                let bv = b.eval(point, params)?;
                if bv == 0.0 && *k < 0 {
                    return Err(ExprError::Domain {
                        subexpr: self.to_string(),
                        reason: "division by zero".into(),
                    });
                }
                bv.powi(*k as i32)
            }
            Expr::Call(f, a) => {
                let av = a.eval(point, params)?;
                f.apply(av).map_err(|reason| ExprError::Domain {
                    subexpr: self.to_string(),
                    reason,
                })?
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                subexpr: self.to_string(),
                reason: "non-finite value".into(),
            })
        }
    }

    /// Flattened evaluator with parameters resolved.
    pub fn compile(&self, params: &ParamValues) -> Result<CompiledExpr, ExprError> {
        CompiledExpr::new(self, params)
    }
}

/// Exact rational value of a decimal literal such as `-12.5` or `3`.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let den = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

/// Shortest decimal that round-trips `v`, as an exact rational.
pub fn rational_from_f64(v: f64) -> Rational {
    parse_decimal(&format!("{v}")).unwrap_or_else(|| {
        Rational::from_float(v).unwrap_or_else(Rational::zero)
    })
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn is_negative_term(e: &Expr) -> bool {
    match e {
        Expr::Const(c) => c.is_negative(),
        Expr::Mul(fs) => matches!(fs.first(), Some(Expr::Const(c)) if c.is_negative()),
        _ => false,
    }
}

fn negate_term(e: &Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Mul(fs) => {
            let mut fs = fs.clone();
            if let Some(Expr::Const(c)) = fs.first() {
                let c = -c;
                if c.is_one() && fs.len() > 1 {
                    fs.remove(0);
                } else {
                    fs[0] = Expr::Const(c);
                }
            }
            if fs.len() == 1 {
                fs.pop().unwrap()
            } else {
                Expr::Mul(fs)
            }
        }
        other => other.clone(),
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;

fn fmt_rational(c: &Rational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

fn write_expr(e: &Expr, prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => {
            let needs = (c.is_negative() && prec > PREC_ADD) || (!c.is_integer() && prec > PREC_MUL);
            if needs {
                write!(f, "(")?;
                fmt_rational(c, f)?;
                write!(f, ")")
            } else {
                fmt_rational(c, f)
            }
        }
        Expr::Var(i) => write!(f, "x{}", i + 1),
        Expr::Param(p) => write!(f, "{p}"),
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, 0, f)?;
            write!(f, ")")
        }
        Expr::Add(ts) => {
            if ts.is_empty() {
                return write!(f, "0");
            }
            let paren = prec > PREC_ADD;
            if paren {
                write!(f, "(")?;
            }
            for (k, t) in ts.iter().enumerate() {
                if k == 0 {
                    write_expr(t, PREC_ADD, f)?;
                } else if is_negative_term(t) {
                    write!(f, " - ")?;
                    write_expr(&negate_term(t), PREC_MUL, f)?;
                } else {
                    write!(f, " + ")?;
                    write_expr(t, PREC_MUL, f)?;
                }
            }
            if paren {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Mul(fs) => {
            if fs.is_empty() {
                return write!(f, "1");
            }
            let (den, num): (Vec<&Expr>, Vec<&Expr>) =
                fs.iter().partition(|x| matches!(x, Expr::Pow(_, k) if *k < 0));
            let leading_neg = matches!(num.first(), Some(Expr::Const(c)) if c.is_negative());
            let paren = prec > PREC_MUL || (leading_neg && prec > PREC_ADD);
            if paren {
                write!(f, "(")?;
            }
            if num.is_empty() {
                write!(f, "1")?;
            }
            let mut first = true;
            for (k, x) in num.iter().enumerate() {
                if k == 0 {
                    if let Expr::Const(c) = x {
                        if (-c).is_one() && num.len() > 1 {
                            write!(f, "-")?;
                            continue;
                        }
                        fmt_rational(c, f)?;
                        first = false;
                        continue;
                    }
                }
                if !first {
                    write!(f, "*")?;
                }
                write_expr(x, PREC_POW, f)?;
                first = false;
            }
            for d in den {
                if let Expr::Pow(b, k) = d {
                    write!(f, "/")?;
                    if *k == -1 {
                        write_expr(b, PREC_POW, f)?;
                    } else {
                        write_expr(&Expr::Pow(b.clone(), -k), PREC_POW, f)?;
                    }
                }
            }
            if paren {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Pow(b, k) => {
            if *k < 0 {
                let paren = prec > PREC_MUL;
                if paren {
                    write!(f, "(")?;
                }
                write!(f, "1/")?;
                if *k == -1 {
                    write_expr(b, PREC_POW, f)?;
                } else {
                    write_expr(&Expr::Pow(b.clone(), -k), PREC_POW, f)?;
                }
                if paren {
                    write!(f, ")")?;
                }
                return Ok(());
            }
            let paren = prec > PREC_POW;
            if paren {
                write!(f, "(")?;
            }
            write_expr(b, PREC_POW + 1, f)?;
            write!(f, "^{k}")?;
            if paren {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, 0, f)
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $build:expr) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                ($build)(self, rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                ($build)(self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                ($build)(self, rhs.clone())
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::Add(vec![a, b]));
binop!(Sub, sub, |a, b| Expr::Add(vec![a, Expr::Mul(vec![Expr::int(-1), b])]));
binop!(Mul, mul, |a, b| Expr::Mul(vec![a, b]));
binop!(Div, div, |a, b: Expr| Expr::Mul(vec![a, b.powi(-1)]));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Mul(vec![Expr::int(-1), self])
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Mul(vec![Expr::int(-1), self.clone()])
    }
}
