use imk_core::exo::Exosystem;
use imk_core::expr::{ParamValues, Rational};
use imk_core::grade::Grade;
use imk_core::linpoly::{solve_embedding, LinSys, RMatrix, DEFAULT_EMBED_TOL};
use imk_core::nform::{build_normal_form, internal_model_output};
use imk_core::sim::{check_adaptation, omega_limit_sample, verify_im_reproduction, AdaptationOptions, OmegaOptions};
use imk_core::vfield::AffineSystem;
use nalgebra::{DMatrix, RowDVector};
use proptest::prelude::*;

fn lin(a: &[Vec<i64>], b: &[i64], c: &[i64]) -> LinSys {
    let rows: Vec<&[i64]> = a.iter().map(Vec::as_slice).collect();
    let r = |v: &[i64]| v.iter().map(|x| Rational::from_integer((*x).into())).collect();
    LinSys::new(RMatrix::from_i64(&rows), r(b), r(c)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn constructed_normal_forms_have_an_exact_chain_and_are_output_driven(
        a in prop::collection::vec(prop::collection::vec(-3i64..=3, 3), 3),
        b in prop::collection::vec(-2i64..=2, 3),
        c in prop::collection::vec(-2i64..=2, 3),
    ) {
        let sys = lin(&a, &b, &c);
        let Some(r) = sys.relative_degree() else { return Ok(()) };
        let nf = build_normal_form(&sys.to_affine().unwrap(), r, 0).unwrap();
        for check in nf.checks.iter().filter(|c| c.name.starts_with("chain_")) {
            prop_assert_eq!(check.grade, Grade::Proven);
        }
        prop_assert!(!nf.output_driven.downgraded);
        prop_assert_eq!(nf.output_driven.grade, Grade::Proven);
        for comp in nf.f2.as_ref().unwrap().components() {
            prop_assert!(comp.affine_parts(3).is_some());
        }
    }
}

struct Fixture {
    sys: AffineSystem,
    exo: Exosystem,
    x0: Vec<f64>,
    w0s: Vec<Vec<f64>>,
}

fn fixtures() -> Vec<(&'static str, Fixture)> {
    let p = ["a1", "a2", "a3", "a4", "a5", "a6"];
    let ecoli = AffineSystem::parse(
        &["a1 - a2*x1 + a3*x2", "a5 - a6*x2"],
        &["-a4*x1", "a4*x1"],
        "(a1+a5) - (a2*x1 + (a6-a3)*x2)",
        &p,
        p.iter().map(|s| (s.to_string(), 1.0)).collect(),
        Some(vec![(1e-3, 10.0), (1e-3, 10.0)]),
    )
    .unwrap();
    let integ = AffineSystem::parse(&["x2", "x3", "-8*x1 - 14*x2 - 7*x3"], &["0", "0", "1"], "3*x2 + x3", &[], ParamValues::new(), None)
        .unwrap();
    let harm = AffineSystem::parse(&["x2", "x3", "-6*x1 - 11*x2 - 6*x3"], &["0", "0", "1"], "4*x1 + x3", &[], ParamValues::new(), None)
        .unwrap();
    vec![
        ("ecoli", Fixture { sys: ecoli, exo: Exosystem::constant(), x0: vec![1.0, 1.0], w0s: vec![vec![0.5], vec![1.0], vec![2.0]] }),
        ("integrator", Fixture { sys: integ, exo: Exosystem::constant(), x0: vec![0.0; 3], w0s: vec![vec![-1.0], vec![0.5], vec![2.0]] }),
        (
            "harmonic",
            Fixture {
                sys: harm,
                exo: Exosystem::harmonic(Rational::from_integer(2.into())),
                x0: vec![0.0; 3],
                w0s: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5, 0.7]],
            },
        ),
    ]
}

/// Each adapting fixture contains an output-driven copy of its exosystem:
/// started from an omega-limit point, the internal model regenerates u.
#[test]
fn adapting_fixtures_contain_an_internal_model_of_their_inputs() {
    for (name, fx) in fixtures() {
        let rep = check_adaptation(&fx.sys, &fx.exo, std::slice::from_ref(&fx.x0), &fx.w0s, &AdaptationOptions::default()).unwrap();
        assert!(rep.pass, "{name}: adaptation failed");
        let nf = build_normal_form(&fx.sys, 1, 0).unwrap();
        let im = internal_model_output(&nf).unwrap();
        for trial in &rep.trials {
            let w0 = &trial.w0;
            let om = omega_limit_sample(&fx.sys, &fx.exo, &fx.x0, w0, trial.horizon, &OmegaOptions::default()).unwrap();
            let pt = om.best().expect("omega-limit point");
            let z2: Vec<f64> = nf.z2.iter().map(|e| e.eval(&pt.x, &nf.values).unwrap()).collect();
            let v = verify_im_reproduction(&im.to_im_system(), &fx.exo, &pt.w, &z2, 20.0, 1e-6).unwrap();
            assert!(v.pass, "{name}: reproduction deviation {:e}", v.max_deviation);
        }
    }
}

/// The linear internal model (F, φ) read off the normal form embeds the exosystem.
#[test]
fn linear_internal_models_embed_the_exosystem() {
    for (name, fx) in fixtures().into_iter().skip(1) {
        let nf = build_normal_form(&fx.sys, 1, 0).unwrap();
        let (f, phi) = internal_model_output(&nf).unwrap().linear_parts().unwrap();
        let Exosystem::Linear { q, theta } = &fx.exo else { unreachable!() };
        let q = q.to_dmatrix();
        let theta = RowDVector::from_iterator(theta.len(), theta.iter().map(imk_core::expr::rational_to_f64));
        let res = solve_embedding(&q, &theta, &f, &RowDVector::from_vec(phi), DEFAULT_EMBED_TOL)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(res.residual_ft_tq < 1e-10 && res.residual_phi_t < 1e-10, "{name}");
        let lead = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| res.block_form[i][j]);
        assert!((lead - &q).amax() < 1e-8, "{name}");
    }
}
