//! Gauss–Jordan elimination over symbolic expressions.

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::expr::{Expr, Rational};

pub type SymMatrix = Vec<Vec<Expr>>;

pub struct Reduced {
    pub rows: SymMatrix,
    pub pivots: Vec<usize>,
    /// Product of the pivots, with the sign of the row permutation.
    pub scale: Expr,
}

/// Reduced row echelon form. Nonzero rational pivots are preferred over
/// symbolic ones, which may vanish for special parameter values.
pub fn rref(m: &SymMatrix) -> Reduced {
    let mut a: SymMatrix = m.iter().map(|r| r.iter().map(Expr::normalize).collect()).collect();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut scale = Expr::one();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let candidates: Vec<usize> = (row..rows).filter(|&i| !a[i][col].is_zero_const()).collect();
        let Some(&p) = candidates.iter().find(|&&i| a[i][col].as_rational().is_some()).or(candidates.first()) else {
            continue;
        };
        if p != row {
            a.swap(p, row);
            scale = -scale;
        }
        let piv = a[row][col].clone();
        scale = (scale * &piv).normalize();
        let inv = piv.powi(-1);
        a[row] = a[row].iter().map(|e| (e * &inv).normalize()).collect();
        for i in 0..rows {
            if i == row || a[i][col].is_zero_const() {
                continue;
            }
            let factor = a[i][col].clone();
            let pivot_row = a[row].clone();
            a[i] = a[i].iter().zip(&pivot_row).map(|(e, p)| (e - &(&factor * p)).normalize()).collect();
        }
        pivots.push(col);
        row += 1;
    }
    Reduced { rows: a, pivots, scale }
}

pub fn determinant(m: &SymMatrix) -> Expr {
    let r = rref(m);
    if r.pivots.len() < m.len() {
        Expr::zero()
    } else {
        r.scale
    }
}

pub fn inverse(m: &SymMatrix) -> Option<SymMatrix> {
    let n = m.len();
    let aug: SymMatrix = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { Expr::one() } else { Expr::zero() }));
            row
        })
        .collect();
    let r = rref(&aug);
    if r.pivots.len() < n || r.pivots[n - 1] >= n {
        return None;
    }
    Some(r.rows.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Basis of `{v : M v = 0}`, one vector per free column. Rational vectors
/// are scaled to coprime integers with a positive leading entry.
pub fn nullspace(m: &SymMatrix, ncols: usize) -> Vec<Vec<Expr>> {
    let r = rref(m);
    let free = (0..ncols).filter(|c| !r.pivots.contains(c));
    free.map(|f| {
        let mut v = vec![Expr::zero(); ncols];
        v[f] = Expr::one();
        for (i, &p) in r.pivots.iter().enumerate() {
            v[p] = (-&r.rows[i][f]).normalize();
        }
        integer_scaled(v)
    })
    .collect()
}

fn integer_scaled(v: Vec<Expr>) -> Vec<Expr> {
    let Some(q) = v.iter().map(Expr::as_rational).collect::<Option<Vec<Rational>>>() else {
        return v;
    };
    let lcm = q.iter().fold(num_bigint::BigInt::one(), |l, c| l.lcm(c.denom()));
    let ints: Vec<_> = q.iter().map(|c| c.numer() * (&lcm / c.denom())).collect();
    let mut g = ints.iter().fold(num_bigint::BigInt::zero(), |g, c| g.gcd(c));
    if g.is_zero() {
        return v;
    }
    if ints.iter().find(|c| !c.is_zero()).is_some_and(|c| c.is_negative()) {
        g = -g;
    }
    ints.into_iter().map(|c| Expr::Const(Rational::from_integer(c / &g))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn m(rows: &[&[&str]], params: &[&str]) -> SymMatrix {
        rows.iter().map(|r| r.iter().map(|s| parse(s, 3, params).unwrap()).collect()).collect()
    }

    #[test]
    fn determinant_and_inverse_of_parametric_matrix() {
        let a = m(&[&["k", "1"], &["0", "2"]], &["k"]);
        assert_eq!(determinant(&a), parse("2*k", 0, &["k"]).unwrap().normalize());
        let inv = inverse(&a).unwrap();
        assert_eq!(inv[0][0], parse("1/k", 0, &["k"]).unwrap().normalize());
        assert_eq!(inv[0][1], parse("-1/(2*k)", 0, &["k"]).unwrap().normalize());
        assert!(inverse(&m(&[&["1", "2"], &["2", "4"]], &[])).is_none());
    }

    #[test]
    fn nullspace_is_integer_and_annihilates() {
        let t = m(&[&["-1/d", "1/d"]], &["d"]);
        let ns = nullspace(&t, 2);
        assert_eq!(ns, vec![vec![Expr::int(1), Expr::int(1)]]);
        let t = m(&[&["2", "0", "3"]], &[]);
        let ns = nullspace(&t, 3);
        assert_eq!(ns, vec![vec![Expr::int(0), Expr::int(1), Expr::int(0)], vec![Expr::int(3), Expr::int(0), Expr::int(-2)]]);
    }

    #[test]
    fn determinant_tracks_row_swaps() {
        let a = m(&[&["0", "1"], &["1", "0"]], &[]);
        assert_eq!(determinant(&a), Expr::int(-1));
    }
}
