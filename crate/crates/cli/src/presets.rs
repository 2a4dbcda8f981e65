//! Built-in example inputs.

use std::collections::BTreeMap;

use crate::schema::{ExoFile, ExoKind, SystemFile, SystemKind, SCHEMA_VERSION};

pub const PRESET_NAMES: [&str; 3] = ["ecoli", "linear-integrator", "linear-harmonic"];

pub struct Preset {
    pub system: SystemFile,
    pub exo: ExoFile,
    pub notes: &'static str,
}

fn exo(kind: ExoKind, omega: Option<f64>, initial_states: Vec<Vec<f64>>) -> ExoFile {
    ExoFile {
        schema_version: SCHEMA_VERSION,
        kind,
        omega,
        coeffs: None,
        q: None,
        theta: None,
        field: None,
        output: None,
        params: BTreeMap::new(),
        initial_states: Some(initial_states),
    }
}

fn linear(a: [[f64; 3]; 3], c: [f64; 3]) -> SystemFile {
    SystemFile {
        schema_version: SCHEMA_VERSION,
        kind: SystemKind::Linear,
        state_dim: 3,
        params: BTreeMap::new(),
        f: None,
        g: None,
        h: None,
        a: Some(a.iter().map(|r| r.to_vec()).collect()),
        b: Some(vec![0.0, 0.0, 1.0]),
        c: Some(c.to_vec()),
        domain: None,
        initial_states: Some(vec![vec![0.0; 3]]),
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let constants = || exo(ExoKind::Constant, None, vec![vec![0.5], vec![1.0], vec![2.0]]);
    match name {
        "ecoli" => Some(Preset {
            system: SystemFile {
                schema_version: SCHEMA_VERSION,
                kind: SystemKind::Nonlinear,
                state_dim: 2,
                params: (1..=6).map(|i| (format!("a{i}"), Some(1.0))).collect(),
                f: Some(vec!["a1 - a2*x1 + a3*x2".into(), "a5 - a6*x2".into()]),
                g: Some(vec!["-a4*x1".into(), "a4*x1".into()]),
                h: Some("(a1 + a5) - (a2*x1 + (a6 - a3)*x2)".into()),
                a: None,
                b: None,
                c: None,
                domain: Some(vec![[1e-3, 10.0], [1e-3, 10.0]]),
                initial_states: Some(vec![vec![1.0, 1.0]]),
            },
            exo: constants(),
            notes: ECOLI_NOTES,
        }),
        "linear-integrator" => Some(Preset {
            system: linear([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-8.0, -14.0, -7.0]], [0.0, 3.0, 1.0]),
            exo: constants(),
            notes: INTEGRATOR_NOTES,
        }),
        "linear-harmonic" => Some(Preset {
            system: linear([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-6.0, -11.0, -6.0]], [4.0, 0.0, 1.0]),
            exo: exo(ExoKind::Harmonic, Some(2.0), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5, 0.7]]),
            notes: HARMONIC_NOTES,
        }),
        _ => None,
    }
}

const ECOLI_NOTES: &str = "\
# ecoli

Receptor methylation model with input u (attractant level), states x1, x2 > 0
and output y = (a1 + a5) - (a2*x1 + (a6 - a3)*x2). Parameters a1..a6 default to 1.

Expected `imk analyze ecoli.system.json ecoli.exo.json`:

- relative degree r = 1, with L_g h = (a2*a4 + (a3 - a6)*a4)*x1
- tau_1 constant, W = (1, 1), so z2 = B = x1 + x2 and B' = y exactly
- adaptation passes for u in {0.5, 1, 2} from x0 = (1, 1)
- omega-limit point (2, 1 + 2u) for constant input u
- internal model phi(B) = (B - 3)/2, reproducing each constant input
- phi has an offset, so the linear embedding stage is skipped
";

const INTEGRATOR_NOTES: &str = "\
# linear-integrator

Controller-form realization of S(s) = s(s + 3) / ((s + 1)(s + 2)(s + 4)),
driven by constant inputs.

Expected `imk analyze linear-integrator.system.json linear-integrator.exo.json`:

- exosystem polynomial pi = s divides the numerator, p0 = s + 3
- internal model b2/pi = 1/s in controller form
- normal form: z2 has dimension 2, F = [[0, 1], [0, -3]], phi = [8, 2]
- embedding of the constant exosystem into (F, phi) with residuals below 1e-10
";

const HARMONIC_NOTES: &str = "\
# linear-harmonic

Controller-form realization of S(s) = (s^2 + 4) / ((s + 1)(s + 2)(s + 3)),
driven by sinusoids of frequency 2.

Expected `imk analyze linear-harmonic.system.json linear-harmonic.exo.json`:

- exosystem polynomial pi = s^2 + 4 divides the numerator, p0 = 1
- internal model b2/pi = 1/(s^2 + 4) in controller form
- normal form: F = [[0, 1], [-4, 0]], phi = [-18, 7]
- embedding of the harmonic exosystem into (F, phi) with residuals below 1e-10
";
