use imk_core::exo::{check_poisson_stable, generate_input, Exosystem, PoissonStatus};
use imk_core::expr::{parse, Rational};
use imk_core::linpoly::RPoly;
use imk_core::vfield::VectorField;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn companion_char_poly_is_the_ode_polynomial(coeffs in prop::collection::vec((-9i64..=9, 1i64..=4), 1..=5)) {
        let b: Vec<Rational> = coeffs.iter().map(|(n, d)| rat(*n, *d)).collect();
        let exo = Exosystem::from_ode_coeffs(&b).unwrap();
        // π(s) = s^l + b1 s^(l-1) + ... + bl, ascending order.
        let mut asc: Vec<Rational> = b.iter().rev().cloned().collect();
        asc.push(rat(1, 1));
        prop_assert_eq!(exo.char_poly().unwrap(), RPoly::new(asc));
    }

    #[test]
    fn proven_poisson_stable_trajectories_return(k in 1i64..=6, w1 in -1.0f64..1.0, w2 in -1.0f64..1.0) {
        let omega = rat(k, 2);
        let exo = Exosystem::harmonic(omega.clone());
        let delta = 1e-3;
        let v = check_poisson_stable(&exo, 50.0, delta, 0).unwrap();
        prop_assert_eq!(v.status, PoissonStatus::Proven);
        let w = k as f64 / 2.0;
        let horizon = 4.0 * 2.0 * std::f64::consts::PI / w;
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, 0.0]);
        let w0 = nalgebra::DVector::from_vec(vec![w1, w2]);
        let steps = 4000;
        let mut best = f64::INFINITY;
        for i in steps / 2..=steps {
            let t = horizon * i as f64 / steps as f64;
            let wt = (&q * t).exp() * &w0;
            best = best.min((wt - &w0).norm());
        }
        prop_assert!(best < 10.0 * delta, "min return distance {}", best);
    }

    #[test]
    fn generated_harmonic_input_solves_its_ode(k in 1i64..=4, w1 in -1.0f64..1.0, w2 in -1.0f64..1.0) {
        let w = k as f64 / 2.0;
        let exo = Exosystem::harmonic(rat(k, 2));
        let h = 1e-3;
        let u = generate_input(&exo, &[w1, w2], 5.0, h).unwrap();
        for i in 1..u.len() - 1 {
            let d2 = (u[i + 1].1 - 2.0 * u[i].1 + u[i - 1].1) / (h * h);
            prop_assert!((d2 + w * w * u[i].1).abs() < 1e-4);
        }
    }
}

#[test]
fn generated_constant_input_is_constant() {
    let u = generate_input(&Exosystem::constant(), &[0.7], 5.0, 1e-2).unwrap();
    assert!(u.windows(2).all(|p| (p[1].1 - p[0].1).abs() < 1e-4 * 1e-2));
}

#[test]
fn poisson_classification_fixtures() {
    let cases = [
        (Exosystem::constant(), PoissonStatus::Proven),
        (Exosystem::harmonic(rat(2, 1)), PoissonStatus::Proven),
        (Exosystem::from_ode_coeffs(&[rat(-1, 1)]).unwrap(), PoissonStatus::ProvenNot),
        (Exosystem::from_ode_coeffs(&[rat(0, 1), rat(0, 1)]).unwrap(), PoissonStatus::ProvenNot),
    ];
    for (exo, expected) in cases {
        assert_eq!(check_poisson_stable(&exo, 50.0, 1e-3, 0).unwrap().status, expected);
    }
}

#[test]
fn nonlinear_exosystem_is_only_sampled() {
    // Undamped pendulum-like center.
    let q = VectorField::parse(&["x2", "-x1 - x1^3"], 2, &[]).unwrap();
    let exo = Exosystem::symbolic(q, parse("x1", 2, &[]).unwrap(), vec![], Default::default()).unwrap();
    assert!(!exo.is_linear());
    let v = check_poisson_stable(&exo, 60.0, 1e-2, 3).unwrap();
    assert_eq!(v.status, PoissonStatus::Sampled);
}
