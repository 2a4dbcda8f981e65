//! Simulation of plants driven by exosystems, and the numerical checks built
//! on it: adaptation trials, omega-limit sampling, output zeroing and
//! internal-model reproduction.

mod dopri;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use dopri::{integrate, rk4_fixed, DenseSolution, IntegratorOptions, IntegratorStats, Method, Rhs};

use crate::exo::{CompiledExo, ExoError, Exosystem};
use crate::expr::{CompiledExpr, Expr, ExprError, ParamValues};
use crate::grade::Grade;
use crate::vfield::{AffineSystem, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("divergence at t = {t}: {reason}")]
    Divergence { t: f64, state: Vec<f64>, reason: String },
    #[error("horizon must be positive (got {0})")]
    BadHorizon(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl From<ExoError> for SimError {
    fn from(e: ExoError) -> Self {
        match e {
            ExoError::Expr(e) => SimError::Expr(e),
            ExoError::Sim(e) => e,
            other => SimError::Dimension(other.to_string()),
        }
    }
}

/// Plant `x' = f(x) + u g(x)`, `y = h(x)` with parameters bound.
#[derive(Debug, Clone)]
pub struct CompiledPlant {
    f: Vec<CompiledExpr>,
    g: Vec<CompiledExpr>,
    h: CompiledExpr,
}

impl CompiledPlant {
    pub fn new(sys: &AffineSystem) -> Result<Self, SimError> {
        let c = |e: &Expr| e.compile(&sys.values);
        Ok(CompiledPlant {
            f: sys.f.components().iter().map(c).collect::<Result<_, _>>()?,
            g: sys.g.components().iter().map(c).collect::<Result<_, _>>()?,
            h: c(&sys.h)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn output(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.h.eval(x)
    }

    fn field(&self, x: &[f64], u: f64, dx: &mut [f64]) -> Result<(), ExprError> {
        for i in 0..self.f.len() {
            dx[i] = self.f[i].eval(x)? + u * self.g[i].eval(x)?;
        }
        Ok(())
    }
}

/// The cascade `w' = Q(w)`, `x' = f(x) + θ(w) g(x)` on the state `(x, w)`.
#[derive(Debug, Clone)]
pub struct Cascade {
    pub plant: CompiledPlant,
    pub exo: CompiledExo,
}

impl Cascade {
    pub fn new(sys: &AffineSystem, exo: &Exosystem) -> Result<Self, SimError> {
        Ok(Cascade { plant: CompiledPlant::new(sys)?, exo: exo.compile()? })
    }

    pub fn n(&self) -> usize {
        self.plant.dim()
    }

    pub fn m(&self) -> usize {
        self.exo.dim()
    }

    fn rhs(&self, s: &[f64], ds: &mut [f64]) -> Result<(), SimError> {
        let n = self.n();
        let (x, w) = s.split_at(n);
        let (dx, dw) = ds.split_at_mut(n);
        let u = self.exo.output(w)?;
        self.plant.field(x, u, dx)?;
        self.exo.field(w, dw)?;
        Ok(())
    }

    /// Integrates from `(x0, w0)` over `[0, horizon]`.
    pub fn solve(&self, x0: &[f64], w0: &[f64], horizon: f64) -> Result<DenseSolution, SimError> {
        if x0.len() != self.n() || w0.len() != self.m() {
            return Err(SimError::Dimension(format!(
                "initial state ({}, {}) for a cascade of dimension ({}, {})",
                x0.len(),
                w0.len(),
                self.n(),
                self.m()
            )));
        }
        let s0: Vec<f64> = x0.iter().chain(w0).copied().collect();
        let rhs = |_: f64, s: &[f64], ds: &mut [f64]| self.rhs(s, ds);
        integrate(&rhs, 0.0, &s0, horizon, &IntegratorOptions::default())
    }

    /// Samples a solution into a [`Trace`].
    pub fn trace(&self, sol: &DenseSolution, points: usize) -> Result<Trace, SimError> {
        let (t, states) = sol.sample_uniform(points);
        let n = self.n();
        let mut trace = Trace {
            t,
            x: Vec::with_capacity(states.len()),
            w: Vec::with_capacity(states.len()),
            u: Vec::with_capacity(states.len()),
            y: Vec::with_capacity(states.len()),
            stats: sol.stats.clone(),
        };
        for s in states {
            let (x, w) = s.split_at(n);
            trace.u.push(self.exo.output(w)?);
            trace.y.push(self.plant.output(x)?);
            trace.x.push(x.to_vec());
            trace.w.push(w.to_vec());
        }
        Ok(trace)
    }
}

/// Default number of grid points per unit time in sampled traces.
pub const POINTS_PER_UNIT: f64 = 40.0;

fn grid_points(horizon: f64) -> usize {
    ((POINTS_PER_UNIT * horizon).ceil() as usize + 1).max(2001)
}

/// Sampled solution of a cascade on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub stats: IntegratorStats,
}

impl Trace {
    /// CSV with header `t,x1..xn,w1..wm,u,y`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.x.first().map_or(0, Vec::len);
        let m = self.w.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("w{i}")));
        header.push("u".into());
        header.push("y".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.t.len() {
            let mut row = vec![self.t[k]];
            row.extend(&self.x[k]);
            row.extend(&self.w[k]);
            row.push(self.u[k]);
            row.push(self.y[k]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    fn max_abs_y_between(&self, a: f64, b: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.y)
            .filter(|(t, _)| **t >= a && **t <= b)
            .fold(0.0, |m, (_, y)| m.max(y.abs()))
    }
}

/// Simulates the plant driven by the exosystem from `(x0, w0)`.
pub fn simulate(sys: &AffineSystem, exo: &Exosystem, x0: &[f64], w0: &[f64], horizon: f64) -> Result<Trace, SimError> {
    let c = Cascade::new(sys, exo)?;
    let sol = c.solve(x0, w0, horizon)?;
    c.trace(&sol, grid_points(horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptationOptions {
    pub horizon: f64,
    pub tol_y: f64,
    /// Trajectories leaving this ∞-norm ball count as unbounded.
    pub bound: f64,
    /// Horizon doublings allowed while `|y|` is still decaying.
    pub max_extensions: usize,
}

impl Default for AdaptationOptions {
    fn default() -> Self {
        AdaptationOptions { horizon: 50.0, tol_y: 1e-6, bound: 1e6, max_extensions: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub x0: Vec<f64>,
    pub w0: Vec<f64>,
    pub horizon: f64,
    pub extensions: usize,
    /// Max `|y|` over the final 20% of the horizon.
    pub max_final_y: f64,
    pub max_state_norm: f64,
    pub bounded: bool,
    pub converged: bool,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationReport {
    pub trials: Vec<TrialResult>,
    pub pass: bool,
    pub options: AdaptationOptions,
    pub grade: Grade,
}

fn run_trial(c: &Cascade, x0: &[f64], w0: &[f64], o: &AdaptationOptions) -> TrialResult {
    let mut horizon = o.horizon;
    let mut extensions = 0;
    loop {
        let failed = |msg: String, horizon: f64| TrialResult {
            x0: x0.to_vec(),
            w0: w0.to_vec(),
            horizon,
            extensions,
            max_final_y: f64::INFINITY,
            max_state_norm: f64::INFINITY,
            bounded: false,
            converged: false,
            pass: false,
            error: Some(msg),
        };
        let trace = match c.solve(x0, w0, horizon).and_then(|s| c.trace(&s, grid_points(horizon))) {
            Ok(t) => t,
            Err(e) => return failed(e.to_string(), horizon),
        };
        let max_state_norm = trace.x.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let w1 = trace.max_abs_y_between(0.6 * horizon, 0.8 * horizon);
        let w2 = trace.max_abs_y_between(0.8 * horizon, horizon);
        if w2 >= o.tol_y && w1 > 2.0 * w2 && extensions < o.max_extensions {
            horizon *= 2.0;
            extensions += 1;
            continue;
        }
        let bounded = max_state_norm <= o.bound;
        let converged = w2 < o.tol_y;
        return TrialResult {
            x0: x0.to_vec(),
            w0: w0.to_vec(),
            horizon,
            extensions,
            max_final_y: w2,
            max_state_norm,
            bounded,
            converged,
            pass: bounded && converged,
            error: None,
        };
    }
}

/// Runs every `(x0, w0)` pair; trials run in parallel, results keep input order.
pub fn check_adaptation(
    sys: &AffineSystem,
    exo: &Exosystem,
    x0s: &[Vec<f64>],
    w0s: &[Vec<f64>],
    opts: &AdaptationOptions,
) -> Result<AdaptationReport, SimError> {
    if x0s.is_empty() || w0s.is_empty() {
        return Err(SimError::Dimension("adaptation needs at least one x0 and one w0".into()));
    }
    let c = Cascade::new(sys, exo)?;
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = x0s.iter().flat_map(|x| w0s.iter().map(move |w| (x, w))).collect();
    let trials: Vec<TrialResult> = pairs.par_iter().map(|(x, w)| run_trial(&c, x, w, opts)).collect();
    let pass = trials.iter().all(|t| t.pass);
    Ok(AdaptationReport {
        pass,
        grade: if pass { Grade::Sampled } else { Grade::Failed },
        trials,
        options: *opts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaOptions {
    pub transient_fraction: f64,
    /// Cluster radius is `radius_scale · (1 + ‖x‖)`.
    pub radius_scale: f64,
}

impl Default for OmegaOptions {
    fn default() -> Self {
        OmegaOptions { transient_fraction: 0.5, radius_scale: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaPoint {
    pub t: f64,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    /// Late samples within the clustering radius of this point.
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaSample {
    /// Representatives of clusters revisited at least three times and
    /// still visited during the final tenth of the horizon.
    pub clusters: Vec<OmegaPoint>,
    /// Late points whose exosystem state returns to `w0`.
    pub recurrent: Vec<OmegaPoint>,
    pub horizon: f64,
    pub options: OmegaOptions,
    pub diagnostic: Option<String>,
}

impl OmegaSample {
    /// Recurrent points first, then cluster representatives.
    pub fn candidates(&self) -> Vec<&OmegaPoint> {
        self.recurrent.iter().chain(&self.clusters).collect()
    }

    /// The latest recurrent point, or the latest cluster representative.
    pub fn best(&self) -> Option<&OmegaPoint> {
        let latest = |v: &'_ [OmegaPoint]| v.iter().max_by(|a, b| a.t.total_cmp(&b.t)).cloned();
        latest(&self.recurrent).or_else(|| latest(&self.clusters)).and_then(|p| {
            self.candidates().into_iter().find(|q| q.t == p.t && q.x == p.x)
        })
    }

    pub fn is_empty(&self) -> bool {
        self.recurrent.is_empty() && self.clusters.is_empty()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

const MAX_RECURRENT: usize = 5;

/// Approximates points of the omega-limit set of `(x0, w0)`.
pub fn omega_limit_sample(
    sys: &AffineSystem,
    exo: &Exosystem,
    x0: &[f64],
    w0: &[f64],
    horizon: f64,
    opts: &OmegaOptions,
) -> Result<OmegaSample, SimError> {
    let c = Cascade::new(sys, exo)?;
    let n = c.n();
    let sol = c.solve(x0, w0, horizon)?;
    let (ts, ss) = sol.sample_uniform(grid_points(horizon));
    let start = opts.transient_fraction * horizon;
    let last_tenth = 0.9 * horizon;
    let late: Vec<(f64, &Vec<f64>)> = ts.iter().copied().zip(&ss).filter(|(t, _)| *t >= start).collect();

    // Leader clustering in time order.
    struct Cluster {
        leader: Vec<f64>,
        radius: f64,
        members: usize,
        last_t: f64,
        last: Vec<f64>,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for (t, s) in &late {
        let hit = clusters.iter_mut().find(|cl| dist(&cl.leader, s) <= cl.radius);
        match hit {
            Some(cl) => {
                cl.members += 1;
                cl.last_t = *t;
                cl.last = (*s).clone();
            }
            None => clusters.push(Cluster {
                leader: (*s).clone(),
                radius: opts.radius_scale * (1.0 + norm(&s[..n])),
                members: 1,
                last_t: *t,
                last: (*s).clone(),
            }),
        }
    }
    let to_point = |t: f64, s: &[f64], visits: usize| OmegaPoint { t, x: s[..n].to_vec(), w: s[n..].to_vec(), visits };
    let cluster_points: Vec<OmegaPoint> = clusters
        .iter()
        .filter(|cl| cl.members >= 3 && cl.last_t >= last_tenth)
        .map(|cl| to_point(cl.last_t, &cl.last, cl.members))
        .collect();

    // Returns of w to w0: local minima of ‖w(t) − w0‖, refined on the dense output.
    let dw = |s: &[f64]| dist(&s[n..], w0);
    let idx: Vec<usize> = (0..ts.len()).filter(|&k| ts[k] >= start).collect();
    let mut recurrent = Vec::new();
    for (j, &k) in idx.iter().enumerate().rev() {
        if recurrent.len() >= MAX_RECURRENT {
            break;
        }
        let d = dw(&ss[k]);
        let prev = if j > 0 { dw(&ss[idx[j - 1]]) } else { f64::INFINITY };
        let next = if k + 1 < ts.len() { dw(&ss[k + 1]) } else { f64::INFINITY };
        if !(d <= prev && d <= next) {
            continue;
        }
        let lo = if j > 0 { ts[idx[j - 1]] } else { ts[k] };
        let hi = if k + 1 < ts.len() { ts[k + 1] } else { ts[k] };
        let t_star = golden_min(|t| dw(&sol.at(t)), lo, hi);
        let s = sol.at(t_star);
        let radius = opts.radius_scale * (1.0 + norm(&s[..n]));
        if dw(&s) <= radius {
            let visits = late.iter().filter(|(_, q)| dist(q, &s) <= radius).count();
            recurrent.push(to_point(t_star, &s, visits));
        }
    }
    recurrent.reverse();
    let diagnostic = (recurrent.is_empty() && cluster_points.is_empty()).then(|| {
        format!("no recurrence found after discarding the first {:.0}% of T = {horizon}", 100.0 * opts.transient_fraction)
    });
    Ok(OmegaSample { clusters: cluster_points, recurrent, horizon, options: *opts, diagnostic })
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    if !(b > a) {
        return a;
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a < 1e-12 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroingPoint {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub h: f64,
    /// Max `|h|` along the re-integrated trajectory.
    pub max_h_forward: f64,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroingVerdict {
    pub points: Vec<ZeroingPoint>,
    pub pass: bool,
    pub tol: f64,
    pub horizon: f64,
    pub grade: Grade,
}

/// `|h| < tol` at each candidate and `|h| < 10·tol` along the trajectory from it.
pub fn verify_output_zeroing(
    sys: &AffineSystem,
    exo: &Exosystem,
    points: &[&OmegaPoint],
    tol: f64,
    horizon: f64,
) -> Result<ZeroingVerdict, SimError> {
    let c = Cascade::new(sys, exo)?;
    let checked: Vec<ZeroingPoint> = points
        .iter()
        .map(|p| {
            let h = c.plant.output(&p.x).unwrap_or(f64::NAN);
            let forward = c.solve(&p.x, &p.w, horizon).and_then(|s| c.trace(&s, grid_points(horizon)));
            match forward {
                Ok(tr) => {
                    let max_h_forward = tr.y.iter().fold(0.0f64, |m, y| m.max(y.abs()));
                    ZeroingPoint {
                        w: p.w.clone(),
                        x: p.x.clone(),
                        h,
                        max_h_forward,
                        pass: h.abs() < tol && max_h_forward < 10.0 * tol,
                        error: None,
                    }
                }
                Err(e) => ZeroingPoint {
                    w: p.w.clone(),
                    x: p.x.clone(),
                    h,
                    max_h_forward: f64::INFINITY,
                    pass: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let pass = !checked.is_empty() && checked.iter().all(|p| p.pass);
    Ok(ZeroingVerdict {
        points: checked,
        pass,
        tol,
        horizon,
        grade: if pass { Grade::Sampled } else { Grade::Failed },
    })
}

/// Internal-model subsystem `z₂' = f₂(0, z₂)` with output `φ(z₂)`; the
/// expressions use `x1..xk` for the coordinates of `z₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImSystem {
    pub f2: VectorField,
    pub phi: Expr,
    pub values: ParamValues,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproductionVerdict {
    pub w0: Vec<f64>,
    pub z2_0: Vec<f64>,
    pub max_deviation: f64,
    pub pass: bool,
    pub tol: f64,
    pub horizon: f64,
    pub grade: Grade,
}

/// Integrates the exosystem and the internal model side by side and
/// measures `max |φ(z₂(t)) − u(t)|`.
pub fn verify_im_reproduction(
    im: &ImSystem,
    exo: &Exosystem,
    w0: &[f64],
    z2_0: &[f64],
    horizon: f64,
    tol: f64,
) -> Result<ReproductionVerdict, SimError> {
    let k = im.f2.dim();
    if z2_0.len() != k || w0.len() != exo.dim() {
        return Err(SimError::Dimension("initial states do not match the internal model and exosystem".into()));
    }
    let f2: Vec<CompiledExpr> = im.f2.components().iter().map(|e| e.compile(&im.values)).collect::<Result<_, _>>()?;
    let phi = im.phi.compile(&im.values)?;
    let ex = exo.compile()?;
    let s0: Vec<f64> = z2_0.iter().chain(w0).copied().collect();
    let rhs = |_: f64, s: &[f64], ds: &mut [f64]| -> Result<(), SimError> {
        let (z, w) = s.split_at(k);
        let (dz, dw) = ds.split_at_mut(k);
        for (d, e) in dz.iter_mut().zip(&f2) {
            *d = e.eval(z)?;
        }
        ex.field(w, dw)?;
        Ok(())
    };
    let sol = integrate(&rhs, 0.0, &s0, horizon, &IntegratorOptions::default())?;
    let (_, states) = sol.sample_uniform(grid_points(horizon));
    let mut max_deviation = 0.0f64;
    for s in &states {
        let (z, w) = s.split_at(k);
        let dev = (phi.eval(z)? - ex.output(w)?).abs();
        max_deviation = max_deviation.max(if dev.is_nan() { f64::INFINITY } else { dev });
    }
    let pass = max_deviation < tol;
    Ok(ReproductionVerdict {
        w0: w0.to_vec(),
        z2_0: z2_0.to_vec(),
        max_deviation,
        pass,
        tol,
        horizon,
        grade: if pass { Grade::Sampled } else { Grade::Failed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Rational};

    fn ecoli_unit() -> AffineSystem {
        let params = ["a1", "a2", "a3", "a4", "a5", "a6"];
        AffineSystem::parse(
            &["a1 - a2*x1 + a3*x2", "a5 - a6*x2"],
            &["-a4*x1", "a4*x1"],
            "(a1+a5) - (a2*x1 + (a6-a3)*x2)",
            &params,
            params.iter().map(|p| (p.to_string(), 1.0)).collect(),
            Some(vec![(1e-3, 10.0), (1e-3, 10.0)]),
        )
        .unwrap()
    }

    #[test]
    fn ecoli_reaches_equilibrium() {
        let tr = simulate(&ecoli_unit(), &Exosystem::constant(), &[1.0, 1.0], &[1.0], 50.0).unwrap();
        let x = tr.x.last().unwrap();
        assert!((x[0] - 2.0).abs() < 1e-6 && (x[1] - 3.0).abs() < 1e-6, "{x:?}");
        // y is recomputed from x exactly.
        let c = CompiledPlant::new(&ecoli_unit()).unwrap();
        for (x, y) in tr.x.iter().zip(&tr.y) {
            assert_eq!(c.output(x).unwrap().to_bits(), y.to_bits());
        }
    }

    #[test]
    fn non_adapting_plant_fails() {
        let sys = AffineSystem::parse(&["-x1"], &["1"], "x1", &[], ParamValues::new(), None).unwrap();
        let rep = check_adaptation(&sys, &Exosystem::constant(), &[vec![0.0]], &[vec![1.0]], &AdaptationOptions::default())
            .unwrap();
        assert!(!rep.pass);
        assert!((rep.trials[0].max_final_y - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ecoli_adapts_with_extension_for_slow_mode() {
        let rep = check_adaptation(
            &ecoli_unit(),
            &Exosystem::constant(),
            &[vec![1.0, 1.0]],
            &[vec![0.5], vec![1.0], vec![2.0]],
            &AdaptationOptions::default(),
        )
        .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.trials.iter().map(|t| t.w0[0]).collect::<Vec<_>>(), vec![0.5, 1.0, 2.0]);
        assert!(rep.trials[2].extensions >= 1);
    }

    #[test]
    fn omega_limit_of_ecoli_is_the_equilibrium() {
        let om = omega_limit_sample(&ecoli_unit(), &Exosystem::constant(), &[1.0, 1.0], &[1.0], 50.0, &OmegaOptions::default())
            .unwrap();
        let p = om.best().unwrap();
        assert!((p.x[0] - 2.0).abs() < 1e-3 && (p.x[1] - 3.0).abs() < 1e-3);
        let z = verify_output_zeroing(&ecoli_unit(), &Exosystem::constant(), &om.candidates(), 1e-6, 10.0).unwrap();
        assert!(z.pass, "{z:?}");
        let off = OmegaPoint { t: 0.0, w: vec![1.0], x: vec![2.1, 3.0], visits: 0 };
        let z = verify_output_zeroing(&ecoli_unit(), &Exosystem::constant(), &[&off], 1e-6, 10.0).unwrap();
        assert!(!z.pass);
    }

    #[test]
    fn harmonic_cascade_has_recurrent_points() {
        // S = (s^2+4)/((s+1)(s+2)(s+3)) in controller form.
        let sys = AffineSystem::parse(&["x2", "x3", "-6*x1 - 11*x2 - 6*x3"], &["0", "0", "1"], "4*x1 + x3", &[], ParamValues::new(), None)
            .unwrap();
        let exo = Exosystem::harmonic(Rational::from_integer(2.into()));
        let om = omega_limit_sample(&sys, &exo, &[0.0, 0.0, 0.0], &[1.0, 0.0], 50.0, &OmegaOptions::default()).unwrap();
        assert!(!om.recurrent.is_empty());
        for p in &om.recurrent {
            assert!(dist(&p.w, &[1.0, 0.0]) < 1e-4);
        }
        let z = verify_output_zeroing(&sys, &exo, &om.candidates(), 1e-6, 10.0).unwrap();
        assert!(z.pass, "{z:?}");
    }

    #[test]
    fn reproduction_by_ecoli_internal_model() {
        let im = ImSystem {
            f2: VectorField::parse(&["0"], 1, &[]).unwrap(),
            phi: parse("(x1 - 3)/2", 1, &[]).unwrap(),
            values: ParamValues::new(),
        };
        for c in [0.5, 1.0, 2.0] {
            let v = verify_im_reproduction(&im, &Exosystem::constant(), &[c], &[3.0 + 2.0 * c], 20.0, 1e-6).unwrap();
            assert!(v.pass && v.max_deviation < 1e-12);
        }
        let wrong = verify_im_reproduction(&im, &Exosystem::constant(), &[1.0], &[0.0], 20.0, 1e-6).unwrap();
        assert!(!wrong.pass);
        assert!((wrong.max_deviation - 2.5).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let tr = simulate(&ecoli_unit(), &Exosystem::constant(), &[1.0, 1.0], &[1.0], 1.0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,w1,u,y");
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }
}
