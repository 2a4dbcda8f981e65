//! Command implementations. Each returns a report; input errors surface as
//! [`CliError`] before any report exists.

use std::path::Path;

use imk_core::exo::{check_no_stable_modes, check_poisson_stable, Exosystem, PoissonStatus};
use imk_core::expr::rational_to_f64;
use imk_core::grade::Grade;
use imk_core::linpoly::{
    check_linear_adaptation, dmatrix_rows, extract_internal_model_linear, feedback_decomposition, output_annihilator,
    solve_embedding, transfer_function, LinSys, RPoly, RRationalFn, DEFAULT_EMBED_TOL,
};
use imk_core::nform::{build_normal_form, internal_model_output, IMOutput, NformError, NormalForm};
use imk_core::sim::{
    check_adaptation, omega_limit_sample, simulate, verify_im_reproduction, verify_output_zeroing, AdaptationOptions,
    AdaptationReport, OmegaOptions, OmegaPoint, Trace,
};
use imk_core::vfield::{check_assumptions, AffineSystem};
use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, FailureKind, StageError};
use crate::report::{to_value, write_atomic, InputDigest, Report};
use crate::schema::{EmbedFile, ExoFile, LoadedExo, LoadedSystem, SystemFile};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeSettings {
    pub horizon: f64,
    pub tol_y: f64,
    /// Random initial states drawn per side when a file lists none.
    pub trials: usize,
    pub seed: u64,
    pub eps_stab: f64,
    pub bound: f64,
    pub max_extensions: usize,
    pub poisson_delta: f64,
    pub zeroing_horizon: f64,
    pub reproduction_horizon: f64,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            horizon: 50.0,
            tol_y: 1e-6,
            trials: 5,
            seed: 0,
            eps_stab: 1e-9,
            bound: 1e6,
            max_extensions: 3,
            poisson_delta: 1e-3,
            zeroing_horizon: 10.0,
            reproduction_horizon: 20.0,
        }
    }
}

impl AnalyzeSettings {
    fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("horizon", self.horizon),
            ("tol", self.tol_y),
            ("eps-stab", self.eps_stab),
            ("bound", self.bound),
            ("poisson delta", self.poisson_delta),
            ("zeroing horizon", self.zeroing_horizon),
            ("reproduction horizon", self.reproduction_horizon),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(CliError::input(format!("{name} must be positive, got {v}")));
        }
        if self.trials == 0 {
            return Err(CliError::input("trials must be at least 1"));
        }
        Ok(())
    }
}

fn load_system(path: &Path) -> Result<(LoadedSystem, InputDigest), CliError> {
    let (file, bytes) = SystemFile::load(path)?;
    Ok((file.build()?, InputDigest::new(path, &bytes)))
}

fn load_exo(path: &Path) -> Result<(LoadedExo, InputDigest), CliError> {
    let (file, bytes) = ExoFile::load(path)?;
    Ok((file.build()?, InputDigest::new(path, &bytes)))
}

fn require_bound(sys: &AffineSystem) -> Result<(), CliError> {
    let unbound: Vec<&String> = sys.params.iter().filter(|p| !sys.values.contains_key(*p)).collect();
    if !unbound.is_empty() {
        return Err(CliError::input(format!("parameters without values: {unbound:?}")));
    }
    Ok(())
}

fn random_states(n: usize, count: usize, domain: Option<&[(f64, f64)]>, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let (lo, hi) = domain.and_then(|d| d.get(i).copied()).unwrap_or((-1.0, 1.0));
                    rng.random_range(lo..hi)
                })
                .collect()
        })
        .collect()
}

fn poisson_grade(s: PoissonStatus) -> Grade {
    match s {
        PoissonStatus::Proven => Grade::Proven,
        PoissonStatus::Sampled => Grade::Sampled,
        PoissonStatus::Unknown => Grade::Unknown,
        PoissonStatus::ProvenNot => Grade::Failed,
    }
}

/// Relative degree and assumption stages; returns `r` when it exists.
fn assumption_stages(rep: &mut Report, sys: &AffineSystem, seed: u64) -> Option<usize> {
    let a = match check_assumptions(sys, seed) {
        Ok(a) => a,
        Err(e) => {
            rep.failed("assumptions", e.into());
            return None;
        }
    };
    let rd = &a.relative_degree;
    let r = rd.r();
    let grade = if r.is_some() { rd.grade } else { Grade::Failed };
    rep.completed("relative_degree", grade, rd);
    match &a.tau {
        Some(tau) => rep.completed("tau_fields", Grade::Proven, tau),
        None => rep.skipped("tau_fields", "no uniform relative degree"),
    }
    rep.completed("assumptions", a.grade, &a);
    r
}

pub fn check(sys_path: &Path, seed: u64) -> Result<Report, CliError> {
    let (sys, digest) = load_system(sys_path)?;
    let mut rep = Report::new("check", vec![digest], json!({ "seed": seed }));
    assumption_stages(&mut rep, &sys.affine, seed);
    Ok(rep)
}

/// Linear route: transfer function, exosystem annihilator and the internal model `b2/π`.
fn linear_internal_model(lin: &LinSys, exo: &Exosystem, eps_stab: f64) -> Result<serde_json::Value, StageError> {
    let Exosystem::Linear { q, theta } = exo else {
        return Err(StageError::new(FailureKind::Input, "the linear pipeline needs a linear exosystem"));
    };
    let s = transfer_function(lin)?;
    let pi = output_annihilator(q, theta)?;
    let g = RRationalFn::new(RPoly::one(), pi.clone())?;
    let decomposition = feedback_decomposition(&s)?;
    let adaptation = check_linear_adaptation(&s, &g, eps_stab)?;
    let im = extract_internal_model_linear(&s, &pi, eps_stab)?;
    Ok(json!({
        "transfer_function": s.to_string(),
        "pi": pi.to_string(),
        "p0": im.p0.to_string(),
        "a": im.a.to_string(),
        "b": im.b.to_string(),
        "b2": im.b2.to_string(),
        "realization": im.realization,
        "decomposition": decomposition,
        "gs_stable": adaptation.stable,
        "gs": adaptation,
    }))
}

struct NormalFormStage {
    nf: NormalForm,
    im: IMOutput,
}

/// Normal-form route; `Ok(None)` when the construction is outside the
/// supported fragment, with the reason recorded as an Unknown stage.
fn normal_form_stage(rep: &mut Report, sys: &AffineSystem, r: usize, seed: u64) -> Option<NormalFormStage> {
    let built = build_normal_form(sys, r, seed).and_then(|nf| internal_model_output(&nf).map(|im| (nf, im)));
    match built {
        Ok((nf, im)) => {
            let grade = nf.grade.weakest(nf.output_driven.grade).weakest(im.denominator);
            let note = nf.output_driven.downgraded.then(|| {
                "z2 dynamics depend on higher output derivatives; only the weaker partition holds".to_string()
            });
            let result = json!({ "normal_form": nf, "internal_model": im });
            match note {
                Some(n) => rep.completed_with_note("normal_form", grade, n, result),
                None => rep.completed("normal_form", grade, result),
            }
            Some(NormalFormStage { nf, im })
        }
        Err(e @ (NformError::NonConstantTau { .. } | NformError::NonAffineCoordinates)) => {
            rep.completed_with_note("normal_form", Grade::Unknown, e.to_string(), serde_json::Value::Null);
            None
        }
        Err(e) => {
            rep.failed("normal_form", e.into());
            None
        }
    }
}

fn embedding_stage(rep: &mut Report, exo: &Exosystem, im: &IMOutput) {
    let Exosystem::Linear { q, theta } = exo else {
        rep.skipped("embedding", "exosystem is not linear");
        return;
    };
    let Some((f, phi)) = im.linear_parts() else {
        rep.skipped("embedding", "internal model is not linear in z2");
        return;
    };
    let qd = q.to_dmatrix();
    let th = RowDVector::from_iterator(theta.len(), theta.iter().map(rational_to_f64));
    match solve_embedding(&qd, &th, &f, &RowDVector::from_vec(phi.clone()), DEFAULT_EMBED_TOL) {
        Ok(res) => rep.completed("embedding", Grade::Sampled, json!({ "F": dmatrix_rows(&f), "phi": phi, "result": res })),
        Err(e) => rep.failed("embedding", e.into()),
    }
}

fn z2_of(nf: &NormalForm, x: &[f64]) -> Result<Vec<f64>, StageError> {
    Ok(nf.z2.iter().map(|e| e.eval(x, &nf.values)).collect::<Result<_, _>>()?)
}

pub fn analyze(sys_path: &Path, exo_path: &Path, s: &AnalyzeSettings, trace_dir: Option<&Path>) -> Result<Report, CliError> {
    s.validate()?;
    let (sys, d1) = load_system(sys_path)?;
    let (exo, d2) = load_exo(exo_path)?;
    require_bound(&sys.affine)?;
    let plant = &sys.affine;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let x0s = sys
        .initial_states
        .clone()
        .unwrap_or_else(|| random_states(plant.dim(), s.trials, plant.domain.as_deref(), &mut rng));
    let w0s = exo.initial_states.clone().unwrap_or_else(|| random_states(exo.exo.dim(), s.trials, None, &mut rng));
    let mut rep = Report::new("analyze", vec![d1, d2], to_value(s));

    let r = assumption_stages(&mut rep, plant, s.seed);

    match check_poisson_stable(&exo.exo, s.horizon, s.poisson_delta, s.seed) {
        Ok(v) => {
            let modes = check_no_stable_modes(&exo.exo, s.eps_stab).ok();
            rep.completed("poisson", poisson_grade(v.status), json!({ "verdict": v, "no_stable_modes": modes }));
        }
        Err(e) => rep.failed("poisson", e.into()),
    }

    let opts = AdaptationOptions { horizon: s.horizon, tol_y: s.tol_y, bound: s.bound, max_extensions: s.max_extensions };
    let adaptation = match check_adaptation(plant, &exo.exo, &x0s, &w0s, &opts) {
        Ok(a) => {
            rep.completed("adaptation", a.grade, &a);
            Some(a)
        }
        Err(e) => {
            rep.failed("adaptation", e.into());
            None
        }
    };
    if let (Some(dir), Some(a)) = (trace_dir, &adaptation) {
        write_traces(dir, plant, &exo.exo, a)?;
    }
    let Some(adaptation) = adaptation.filter(|a| a.pass) else {
        for stage in ["omega_limit", "output_zeroing", "internal_model"] {
            rep.skipped(stage, "adaptation did not pass");
        }
        return Ok(rep);
    };

    // Omega-limit points, one sample per trial.
    let mut samples = Vec::new();
    let mut omega_err = None;
    for t in &adaptation.trials {
        match omega_limit_sample(plant, &exo.exo, &t.x0, &t.w0, t.horizon, &OmegaOptions::default()) {
            Ok(om) => samples.push(om),
            Err(e) => {
                omega_err = Some(e);
                break;
            }
        }
    }
    if let Some(e) = omega_err {
        rep.failed("omega_limit", e.into());
        return Ok(rep);
    }
    let best: Vec<Option<OmegaPoint>> = samples.iter().map(|o| o.best().cloned()).collect();
    let omega_grade = if best.iter().all(Option::is_some) { Grade::Sampled } else { Grade::Unknown };
    rep.completed("omega_limit", omega_grade, &samples);

    let candidates: Vec<&OmegaPoint> = samples.iter().flat_map(|o| o.candidates()).collect();
    match verify_output_zeroing(plant, &exo.exo, &candidates, s.tol_y, s.zeroing_horizon) {
        Ok(v) => rep.completed("output_zeroing", v.grade, &v),
        Err(e) => rep.failed("output_zeroing", e.into()),
    }

    let Some(r) = r else {
        rep.skipped("internal_model", "no uniform relative degree");
        return Ok(rep);
    };
    if let Some(lin) = &sys.linear {
        if exo.exo.is_linear() {
            match linear_internal_model(lin, &exo.exo, s.eps_stab) {
                Ok(v) => rep.completed("linear_internal_model", Grade::Proven, v),
                Err(e) => rep.failed("linear_internal_model", e),
            }
        }
    }
    let Some(stage) = normal_form_stage(&mut rep, plant, r, s.seed) else {
        rep.skipped("reproduction", "no internal model was constructed");
        return Ok(rep);
    };
    embedding_stage(&mut rep, &exo.exo, &stage.im);

    let im_sys = stage.im.to_im_system();
    let mut verdicts = Vec::new();
    for p in best.iter().flatten() {
        let z2 = match z2_of(&stage.nf, &p.x) {
            Ok(z) => z,
            Err(e) => {
                rep.failed("reproduction", e);
                return Ok(rep);
            }
        };
        match verify_im_reproduction(&im_sys, &exo.exo, &p.w, &z2, s.reproduction_horizon, s.tol_y) {
            Ok(v) => verdicts.push(v),
            Err(e) => {
                rep.failed("reproduction", e.into());
                return Ok(rep);
            }
        }
    }
    let grade = if verdicts.is_empty() { Grade::Unknown } else { Grade::combine(verdicts.iter().map(|v| v.grade)) };
    rep.completed("reproduction", grade, &verdicts);
    Ok(rep)
}

fn write_traces(dir: &Path, plant: &AffineSystem, exo: &Exosystem, a: &AdaptationReport) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    for (k, t) in a.trials.iter().enumerate() {
        if t.error.is_some() {
            continue;
        }
        let Ok(trace) = simulate(plant, exo, &t.x0, &t.w0, t.horizon) else { continue };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).expect("writing to memory");
        write_atomic(&dir.join(format!("trial_{}.csv", k + 1)), &buf)?;
    }
    Ok(())
}

pub fn extract_im(sys_path: &Path, exo_path: &Path, seed: u64, eps_stab: f64) -> Result<Report, CliError> {
    let (sys, d1) = load_system(sys_path)?;
    let (exo, d2) = load_exo(exo_path)?;
    let mut rep = Report::new("extract-im", vec![d1, d2], json!({ "seed": seed, "eps_stab": eps_stab }));
    if let Some(lin) = &sys.linear {
        if exo.exo.is_linear() {
            match linear_internal_model(lin, &exo.exo, eps_stab) {
                Ok(v) => rep.completed("linear_internal_model", Grade::Proven, v),
                Err(e) => rep.failed("linear_internal_model", e),
            }
        }
    }
    let r = match imk_core::vfield::relative_degree(&sys.affine, seed) {
        Ok(rd) => {
            rep.completed("relative_degree", rd.grade, &rd);
            rd.r()
        }
        Err(e) => {
            rep.failed("relative_degree", e.into());
            None
        }
    };
    if let Some(r) = r {
        if let Some(stage) = normal_form_stage(&mut rep, &sys.affine, r, seed) {
            embedding_stage(&mut rep, &exo.exo, &stage.im);
        }
    }
    Ok(rep)
}

pub fn embed(path: &Path) -> Result<Report, CliError> {
    let (file, bytes) = EmbedFile::load(path)?;
    let tol = file.tol.unwrap_or(DEFAULT_EMBED_TOL);
    let matrix = |rows: &[Vec<f64>], what: &str| -> Result<DMatrix<f64>, CliError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(CliError::input(format!("{what} must be square and nonempty")));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    };
    let q = matrix(&file.q, "Q")?;
    let f = matrix(&file.f, "F")?;
    let mut rep = Report::new("embed", vec![InputDigest::new(path, &bytes)], json!({ "tol": tol }));
    let theta = RowDVector::from_vec(file.theta.clone());
    let phi = RowDVector::from_vec(file.phi.clone());
    match solve_embedding(&q, &theta, &f, &phi, tol) {
        Ok(res) => rep.completed("embedding", Grade::Sampled, &res),
        Err(e) => {
            let e = StageError::from(e);
            if e.kind == FailureKind::Input {
                return Err(CliError::Input(e.message));
            }
            rep.failed("embedding", e);
        }
    }
    Ok(rep)
}

pub struct SimulateArgs<'a> {
    pub x0: Option<Vec<f64>>,
    pub w0: Option<Vec<f64>>,
    pub horizon: f64,
    pub out: Option<&'a Path>,
}

/// Simulates one trajectory; x0 and w0 default to the first initial state in
/// each file, then to zeros and ones.
pub fn simulate_cmd(sys_path: &Path, exo_path: &Path, args: &SimulateArgs) -> Result<Result<Trace, StageError>, CliError> {
    if !(args.horizon.is_finite() && args.horizon > 0.0) {
        return Err(CliError::input("horizon must be positive"));
    }
    let (sys, _) = load_system(sys_path)?;
    let (exo, _) = load_exo(exo_path)?;
    require_bound(&sys.affine)?;
    let x0 = args
        .x0
        .clone()
        .or_else(|| sys.initial_states.as_ref().map(|s| s[0].clone()))
        .unwrap_or_else(|| vec![0.0; sys.affine.dim()]);
    let w0 = args
        .w0
        .clone()
        .or_else(|| exo.initial_states.as_ref().map(|s| s[0].clone()))
        .unwrap_or_else(|| vec![1.0; exo.exo.dim()]);
    if x0.len() != sys.affine.dim() || w0.len() != exo.exo.dim() {
        return Err(CliError::input(format!(
            "x0 needs {} entries and w0 needs {}",
            sys.affine.dim(),
            exo.exo.dim()
        )));
    }
    Ok(simulate(&sys.affine, &exo.exo, &x0, &w0, args.horizon).map_err(StageError::from))
}
