use imk_core::expr::{parse, Expr, ParamValues, Rational};
use imk_core::linpoly::{LinSys, RMatrix};
use imk_core::vfield::{lie_bracket, lie_derivative, relative_degree, tau_fields, AffineSystem, VectorField};
use proptest::prelude::*;

/// Polynomial of degree at most two in three variables with small integer coefficients.
fn quadratic() -> impl Strategy<Value = Expr> {
    prop::collection::vec(-2i64..=2, 10).prop_map(|c| {
        let x = |i| Expr::var(i);
        let monomials = [
            Expr::one(),
            x(0),
            x(1),
            x(2),
            x(0) * x(0),
            x(0) * x(1),
            x(0) * x(2),
            x(1) * x(1),
            x(1) * x(2),
            x(2) * x(2),
        ];
        Expr::Add(c.iter().zip(monomials).map(|(k, m)| Expr::int(*k) * m).collect()).normalize()
    })
}

fn field() -> impl Strategy<Value = VectorField> {
    prop::collection::vec(quadratic(), 3).prop_map(VectorField::new)
}

fn small_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(-3i64..=3, n), n)
}

/// Markov parameters `c A^k b` computed with plain integer arithmetic.
fn markov_relative_degree(a: &[Vec<i64>], b: &[i64], c: &[i64]) -> Option<usize> {
    let n = b.len();
    let mut v = b.to_vec();
    for k in 0..n {
        let m: i64 = c.iter().zip(&v).map(|(x, y)| x * y).sum();
        if m != 0 {
            return Some(k + 1);
        }
        v = (0..n).map(|i| (0..n).map(|j| a[i][j] * v[j]).sum()).collect();
    }
    None
}

fn lin(a: &[Vec<i64>], b: &[i64], c: &[i64]) -> LinSys {
    let rows: Vec<&[i64]> = a.iter().map(Vec::as_slice).collect();
    let r = |v: &[i64]| v.iter().map(|x| Rational::from_integer((*x).into())).collect();
    LinSys::new(RMatrix::from_i64(&rows), r(b), r(c)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn bracket_is_antisymmetric(x in field(), y in field()) {
        let s = lie_bracket(&x, &y);
        let t = lie_bracket(&y, &x);
        for i in 0..3 {
            prop_assert!((s.component(i) + t.component(i)).normalize().is_zero_const());
        }
    }

    #[test]
    fn bracket_acts_as_commutator_of_derivations(x in field(), y in field(), h in quadratic()) {
        let lhs = lie_derivative(&h, &lie_bracket(&x, &y));
        let rhs = lie_derivative(&lie_derivative(&h, &y), &x) - lie_derivative(&lie_derivative(&h, &x), &y);
        prop_assert!((lhs - rhs).normalize().is_zero_const());
    }

    #[test]
    fn linear_relative_degree_is_first_nonzero_markov_index(
        a in small_matrix(3),
        b in prop::collection::vec(-2i64..=2, 3),
        c in prop::collection::vec(-2i64..=2, 3),
    ) {
        let expected = markov_relative_degree(&a, &b, &c);
        let sys = lin(&a, &b, &c);
        prop_assert_eq!(sys.relative_degree(), expected);
        let rd = relative_degree(&sys.to_affine().unwrap(), 0).unwrap();
        prop_assert_eq!(rd.r(), expected);
    }

    #[test]
    fn normalized_input_field_reconstructs_g(
        a in small_matrix(3),
        b in prop::collection::vec(-2i64..=2, 3),
        c in prop::collection::vec(-2i64..=2, 3),
    ) {
        let Some(r) = markov_relative_degree(&a, &b, &c) else { return Ok(()) };
        let sys = lin(&a, &b, &c).to_affine().unwrap();
        let tau = tau_fields(&sys, r).unwrap();
        let gain = lie_derivative(&sys.output_derivatives(r - 1)[r - 1], &sys.g);
        for i in 0..3 {
            let diff = tau.g_tilde.component(i) * &gain - sys.g.component(i);
            prop_assert!(diff.normalize().is_zero_const());
        }
    }
}

#[test]
fn ecoli_input_field_reconstructs_g() {
    let p = ["a1", "a2", "a3", "a4", "a5", "a6"];
    let sys = AffineSystem::parse(
        &["a1 - a2*x1 + a3*x2", "a5 - a6*x2"],
        &["-a4*x1", "a4*x1"],
        "(a1+a5) - (a2*x1 + (a6-a3)*x2)",
        &p,
        ParamValues::new(),
        Some(vec![(1e-3, 10.0), (1e-3, 10.0)]),
    )
    .unwrap();
    let tau = tau_fields(&sys, 1).unwrap();
    let gain = lie_derivative(&sys.h, &sys.g);
    let expected = parse("(a2*a4 + (a3 - a6)*a4)*x1", 2, &p).unwrap();
    assert!((gain.clone() - expected).normalize().is_zero_const());
    for i in 0..2 {
        assert!((tau.g_tilde.component(i) * &gain - sys.g.component(i)).normalize().is_zero_const());
    }
    assert!(tau.g_tilde.is_constant());
}
