//! Canonical multivariate rational normal form.
//!
//! An expression is mapped to a reduced quotient `num / den` of sparse
//! polynomials over the rationals. The indeterminates ("atoms") are state
//! variables, parameters and function applications whose argument is itself
//! in canonical form. Two expressions that are equal as rational functions of
//! their atoms map to the same quotient, which is what makes the zero test
//! complete on the polynomial/rational fragment.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use super::{Expr, Func, Rational};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Atom {
    Var(usize),
    Param(String),
    Call(Func, Box<Expr>),
    /// Reciprocal of an expression that normalizes to zero.
    DivZero,
}

impl Atom {
    fn to_expr(&self) -> Expr {
        match self {
            Atom::Var(i) => Expr::Var(*i),
            Atom::Param(p) => Expr::Param(p.clone()),
            Atom::Call(f, a) => Expr::Call(*f, a.clone()),
            Atom::DivZero => Expr::Pow(Box::new(Expr::Const(Rational::zero())), -1),
        }
    }
}

/// Power product of atoms, stored in descending atom order with positive exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub(crate) struct Mono(Vec<(Atom, u32)>);

impl Ord for Mono {
    // Pure lexicographic order, larger atoms more significant.
    fn cmp(&self, other: &Self) -> Ordering {
        let mut a = self.0.iter();
        let mut b = other.0.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some((xa, ea)), Some((xb, eb))) => match xa.cmp(xb) {
                    Ordering::Equal => match ea.cmp(eb) {
                        Ordering::Equal => continue,
                        o => return o,
                    },
                    o => return o,
                },
            }
        }
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Mono {
    fn one() -> Self {
        Mono(Vec::new())
    }

    fn atom(a: Atom) -> Self {
        Mono(vec![(a, 1)])
    }

    fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    fn mul(&self, other: &Mono) -> Mono {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (ref a, ea) = self.0[i];
            let (ref b, eb) = other.0[j];
            match a.cmp(b) {
                Ordering::Greater => {
                    out.push((a.clone(), ea));
                    i += 1;
                }
                Ordering::Less => {
                    out.push((b.clone(), eb));
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a.clone(), ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Mono(out)
    }

    /// `self / other` if `other` divides `self`.
    fn div(&self, other: &Mono) -> Option<Mono> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut j = 0;
        for (a, ea) in &self.0 {
            if j < other.0.len() && &other.0[j].0 == a {
                let eb = other.0[j].1;
                if eb > *ea {
                    return None;
                }
                if ea - eb > 0 {
                    out.push((a.clone(), ea - eb));
                }
                j += 1;
            } else if j < other.0.len() && &other.0[j].0 > a {
                return None;
            } else {
                out.push((a.clone(), *ea));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Mono(out))
    }

    fn degree_in(&self, v: &Atom) -> u32 {
        self.0
            .iter()
            .find(|(a, _)| a == v)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    fn without(&self, v: &Atom) -> Mono {
        Mono(self.0.iter().filter(|(a, _)| a != v).cloned().collect())
    }

    fn with_power(&self, v: &Atom, e: u32) -> Mono {
        if e == 0 {
            return self.clone();
        }
        self.mul(&Mono(vec![(v.clone(), e)]))
    }
}

/// Sparse multivariate polynomial with rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub(crate) struct MPoly {
    terms: BTreeMap<Mono, Rational>,
}

impl MPoly {
    pub fn zero() -> Self {
        MPoly { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Mono::one(), c);
        }
        MPoly { terms }
    }

    pub fn atom(a: Atom) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Mono::atom(a), Rational::one());
        MPoly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    fn lead(&self) -> Option<(&Mono, &Rational)> {
        self.terms.iter().next_back()
    }

    fn add_term(&mut self, m: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add(&self, other: &MPoly) -> MPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> MPoly {
        MPoly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &MPoly) -> MPoly {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: &Rational) -> MPoly {
        if k.is_zero() {
            return MPoly::zero();
        }
        MPoly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    fn mul_term(&self, m: &Mono, k: &Rational) -> MPoly {
        MPoly {
            terms: self
                .terms
                .iter()
                .map(|(mm, c)| (mm.mul(m), c * k))
                .collect(),
        }
    }

    pub fn mul(&self, other: &MPoly) -> MPoly {
        if self.is_zero() || other.is_zero() {
            return MPoly::zero();
        }
        let mut out = MPoly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> MPoly {
        let mut result = MPoly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Scale so the lexicographically leading coefficient is one.
    pub fn monic(&self) -> MPoly {
        match self.lead() {
            None => MPoly::zero(),
            Some((_, c)) => {
                let inv = c.recip();
                self.scale(&inv)
            }
        }
    }

    fn max_atom(&self) -> Option<Atom> {
        self.terms
            .keys()
            .filter_map(|m| m.0.first().map(|(a, _)| a.clone()))
            .max()
    }

    fn degree_in(&self, v: &Atom) -> u32 {
        self.terms.keys().map(|m| m.degree_in(v)).max().unwrap_or(0)
    }

    fn coeffs_in(&self, v: &Atom) -> Vec<MPoly> {
        let d = self.degree_in(v) as usize;
        let mut out = vec![MPoly::zero(); d + 1];
        for (m, c) in &self.terms {
            let e = m.degree_in(v) as usize;
            out[e].add_term(m.without(v), c.clone());
        }
        out
    }

    fn from_coeffs_in(v: &Atom, coeffs: &[MPoly]) -> MPoly {
        let mut out = MPoly::zero();
        for (e, c) in coeffs.iter().enumerate() {
            for (m, k) in &c.terms {
                out.add_term(m.with_power(v, e as u32), k.clone());
            }
        }
        out
    }

    /// Exact quotient, or `None` when `d` does not divide `self`.
    pub fn exact_div(&self, d: &MPoly) -> Option<MPoly> {
        if d.is_zero() {
            return None;
        }
        if let Some(c) = d.as_constant() {
            return Some(self.scale(&c.recip()));
        }
        let (lm_d, lc_d) = d.lead().map(|(m, c)| (m.clone(), c.clone()))?;
        let mut q = MPoly::zero();
        let mut r = self.clone();
        while let Some((lm_r, lc_r)) = r.lead().map(|(m, c)| (m.clone(), c.clone())) {
            let m = lm_r.div(&lm_d)?;
            let k = lc_r / &lc_d;
            r = r.sub(&d.mul_term(&m, &k));
            q.add_term(m, k);
        }
        Some(q)
    }

    pub fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .terms
            .iter()
            .rev()
            .map(|(m, c)| term_expr(m, c))
            .collect();
        match terms.len() {
            0 => Expr::Const(Rational::zero()),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }
}

fn term_expr(m: &Mono, c: &Rational) -> Expr {
    if m.is_one() {
        return Expr::Const(c.clone());
    }
    let mut factors = Vec::with_capacity(m.0.len() + 1);
    if !c.is_one() {
        factors.push(Expr::Const(c.clone()));
    }
    for (a, e) in m.0.iter().rev() {
        let base = a.to_expr();
        factors.push(if *e == 1 {
            base
        } else {
            Expr::Pow(Box::new(base), *e as i64)
        });
    }
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Expr::Mul(factors)
    }
}

fn content_in(p: &MPoly, v: &Atom) -> MPoly {
    let mut g = MPoly::zero();
    for c in p.coeffs_in(v) {
        if c.is_zero() {
            continue;
        }
        g = gcd(&g, &c);
        if g.is_constant() {
            return MPoly::one();
        }
    }
    g
}

fn trim(v: &mut Vec<MPoly>) {
    while v.len() > 1 && v.last().map(MPoly::is_zero).unwrap_or(false) {
        v.pop();
    }
}

/// Pseudo-remainder of `p` by `q`, both given as coefficient vectors in one atom.
fn prem(p: &[MPoly], q: &[MPoly]) -> Vec<MPoly> {
    let mut r = p.to_vec();
    trim(&mut r);
    let dq = q.len() - 1;
    let lc = q[dq].clone();
    while r.len() > dq && !(r.len() == 1 && r[0].is_zero()) {
        let dr = r.len() - 1;
        let t = r[dr].clone();
        let shift = dr - dq;
        for c in r.iter_mut() {
            *c = c.mul(&lc);
        }
        for (i, qc) in q.iter().enumerate() {
            let sub = t.mul(qc);
            r[i + shift] = r[i + shift].sub(&sub);
        }
        trim(&mut r);
        // The leading coefficient is now zero by construction; drop it.
        if r.len() - 1 == dr {
            r.pop();
            trim(&mut r);
        }
        // Keep rational coefficient growth in check.
        if let Some(scale) = r.last().and_then(|c| c.lead().map(|(_, k)| k.clone())) {
            if !scale.is_zero() {
                let inv = scale.abs().recip();
                for c in r.iter_mut() {
                    *c = c.scale(&inv);
                }
            }
        }
        if r.is_empty() {
            r.push(MPoly::zero());
        }
    }
    r
}

/// Greatest common divisor, normalized to leading coefficient one.
pub(crate) fn gcd(a: &MPoly, b: &MPoly) -> MPoly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return MPoly::one();
    }
    let v = match (a.max_atom(), b.max_atom()) {
        (Some(x), Some(y)) => x.max(y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => return MPoly::one(),
    };
    let da = a.degree_in(&v);
    let db = b.degree_in(&v);
    if da == 0 {
        return gcd(a, &content_in(b, &v));
    }
    if db == 0 {
        return gcd(&content_in(a, &v), b);
    }
    let ca = content_in(a, &v);
    let cb = content_in(b, &v);
    let c = gcd(&ca, &cb);
    let pa = a.exact_div(&ca).expect("content divides");
    let pb = b.exact_div(&cb).expect("content divides");
    let mut p = pa.coeffs_in(&v);
    let mut q = pb.coeffs_in(&v);
    if p.len() < q.len() {
        std::mem::swap(&mut p, &mut q);
    }
    loop {
        let r = prem(&p, &q);
        if r.iter().all(MPoly::is_zero) {
            break;
        }
        if r.len() == 1 {
            q = vec![MPoly::one()];
            break;
        }
        let rp = MPoly::from_coeffs_in(&v, &r);
        let rc = content_in(&rp, &v);
        let rpp = rp.exact_div(&rc).expect("content divides");
        p = q;
        q = rpp.coeffs_in(&v);
    }
    let g = MPoly::from_coeffs_in(&v, &q);
    c.mul(&g).monic()
}

/// Reduced quotient of polynomials; the denominator has leading coefficient one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct RatFn {
    pub num: MPoly,
    pub den: MPoly,
}

impl RatFn {
    pub fn poly(p: MPoly) -> Self {
        RatFn { num: p, den: MPoly::one() }
    }

    pub fn constant(c: Rational) -> Self {
        Self::poly(MPoly::constant(c))
    }

    pub fn atom(a: Atom) -> Self {
        Self::poly(MPoly::atom(a))
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        if self.den.as_constant().map(|c| c.is_one()).unwrap_or(false) {
            self.num.as_constant()
        } else {
            None
        }
    }

    fn reduced(num: MPoly, den: MPoly) -> RatFn {
        if num.is_zero() {
            return RatFn::poly(MPoly::zero());
        }
        if let Some(c) = den.as_constant() {
            return RatFn::poly(num.scale(&c.recip()));
        }
        let g = gcd(&num, &den);
        let (num, den) = if g.is_constant() {
            (num, den)
        } else {
            (
                num.exact_div(&g).expect("gcd divides numerator"),
                den.exact_div(&g).expect("gcd divides denominator"),
            )
        };
        let lc = den.lead().map(|(_, c)| c.clone()).unwrap();
        let inv = lc.recip();
        RatFn {
            num: num.scale(&inv),
            den: den.scale(&inv),
        }
    }

    pub fn add(&self, other: &RatFn) -> RatFn {
        if self.den == other.den {
            if self.den.is_constant() {
                return RatFn::poly(self.num.add(&other.num));
            }
            return RatFn::reduced(self.num.add(&other.num), self.den.clone());
        }
        let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
        RatFn::reduced(num, self.den.mul(&other.den))
    }

    pub fn mul(&self, other: &RatFn) -> RatFn {
        if self.den.is_constant() && other.den.is_constant() {
            return RatFn::poly(self.num.mul(&other.num));
        }
        RatFn::reduced(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn recip(&self) -> RatFn {
        if self.num.is_zero() {
            return RatFn::atom(Atom::DivZero);
        }
        RatFn::reduced(self.den.clone(), self.num.clone())
    }

    pub fn pow(&self, e: i64) -> RatFn {
        if e == 0 {
            return RatFn::constant(Rational::one());
        }
        let base = if e < 0 { self.recip() } else { self.clone() };
        let k = e.unsigned_abs() as u32;
        RatFn {
            num: base.num.pow(k),
            den: base.den.pow(k),
        }
    }

    pub fn to_expr(&self) -> Expr {
        let num = self.num.to_expr();
        if self.den.as_constant().is_some() {
            return num;
        }
        let den = Expr::Pow(Box::new(self.den.to_expr()), -1);
        match num {
            Expr::Const(c) if c.is_one() => den,
            Expr::Mul(mut fs) => {
                fs.push(den);
                Expr::Mul(fs)
            }
            other => Expr::Mul(vec![other, den]),
        }
    }
}

/// Maps an arbitrary expression tree to its canonical quotient.
pub(crate) fn to_ratfn(e: &Expr) -> RatFn {
    match e {
        Expr::Const(c) => RatFn::constant(c.clone()),
        Expr::Var(i) => RatFn::atom(Atom::Var(*i)),
        Expr::Param(p) => RatFn::atom(Atom::Param(p.clone())),
        Expr::Add(ts) => ts
            .iter()
            .fold(RatFn::constant(Rational::zero()), |acc, t| acc.add(&to_ratfn(t))),
        Expr::Mul(fs) => {
            let mut acc = RatFn::constant(Rational::one());
            for f in fs {
                acc = acc.mul(&to_ratfn(f));
                if acc.is_zero() {
                    break;
                }
            }
            acc
        }
        Expr::Pow(b, k) => to_ratfn(b).pow(*k),
        Expr::Call(f, a) => {
            let arg = to_ratfn(a);
            if let Some(c) = arg.as_constant() {
                if let Some(v) = f.exact_at(&c) {
                    return RatFn::constant(v);
                }
            }
            RatFn::atom(Atom::Call(*f, Box::new(arg.to_expr())))
        }
    }
}
