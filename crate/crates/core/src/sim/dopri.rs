//! Dormand–Prince 5(4) with continuous output, and classical fixed-step RK4.

use serde::Serialize;

use super::SimError;

/// Right-hand side `dx = F(t, x)`.
pub type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<(), SimError> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub max_steps: usize,
    /// States with a larger norm count as blow-up.
    pub blowup: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { rtol: 1e-8, atol: 1e-10, h0: None, max_steps: 2_000_000, blowup: 1e12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dopri5,
    Rk4Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub method: Method,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub min_step: f64,
    pub max_step: f64,
}

/// One accepted step and its interpolation data.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

/// Piecewise continuous solution over `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    segments: Vec<Segment>,
    t0: f64,
    t1: f64,
    x0: Vec<f64>,
    x1: Vec<f64>,
    pub stats: IntegratorStats,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t1
    }

    pub fn final_state(&self) -> &[f64] {
        &self.x1
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// State at `t` (clamped to the integration interval).
    pub fn at(&self, t: f64) -> Vec<f64> {
        if self.segments.is_empty() || t <= self.t0 {
            return self.x0.clone();
        }
        if t >= self.t1 {
            return self.x1.clone();
        }
        let k = self.segments.partition_point(|s| s.t0 + s.h < t).min(self.segments.len() - 1);
        let s = &self.segments[k];
        let th = ((t - s.t0) / s.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &s.rcont;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }

    /// Samples on a uniform grid of `points ≥ 2` nodes including both ends.
    pub fn sample_uniform(&self, points: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let points = points.max(2);
        let dt = (self.t1 - self.t0) / (points - 1) as f64;
        let ts: Vec<f64> = (0..points)
            .map(|k| if k == points - 1 { self.t1 } else { self.t0 + k as f64 * dt })
            .collect();
        let xs = ts.iter().map(|&t| self.at(t)).collect();
        (ts, xs)
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn combo(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn check_state(t: f64, x: &[f64], blowup: f64) -> Result<(), SimError> {
    if x.iter().any(|v| !v.is_finite()) || norm_inf(x) > blowup {
        return Err(SimError::Divergence { t, state: x.to_vec(), reason: "state blew up".into() });
    }
    Ok(())
}

fn initial_step(rhs: &Rhs, t0: f64, x0: &[f64], f0: &[f64], span: f64, o: &IntegratorOptions) -> Result<f64, SimError> {
    let sc: Vec<f64> = x0.iter().map(|v| o.atol + o.rtol * v.abs()).collect();
    let d0 = (x0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / x0.len() as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / x0.len() as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let x1: Vec<f64> = x0.iter().zip(f0).map(|(x, f)| x + h0 * f).collect();
    let mut f1 = vec![0.0; x0.len()];
    rhs(t0 + h0, &x1, &mut f1)?;
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / x0.len() as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Adaptive integration of `x' = rhs(t, x)` from `t0` to `t1 > t0`.
pub fn integrate(rhs: &Rhs, t0: f64, x0: &[f64], t1: f64, o: &IntegratorOptions) -> Result<DenseSolution, SimError> {
    if !(t1 > t0) {
        return Err(SimError::BadHorizon(t1 - t0));
    }
    let n = x0.len();
    let mut stats = IntegratorStats {
        method: Method::Dopri5,
        accepted: 0,
        rejected: 0,
        evaluations: 0,
        min_step: f64::INFINITY,
        max_step: 0.0,
    };
    let mut t = t0;
    let mut y = x0.to_vec();
    check_state(t, &y, o.blowup)?;
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1)?;
    stats.evaluations += 1;
    let mut h = match o.h0 {
        Some(h) => h,
        None => {
            stats.evaluations += 1;
            initial_step(rhs, t, &y, &k1, t1 - t0, o)?
        }
    };
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut segments = Vec::new();
    let mut last_rejected = false;
    while t < t1 {
        if stats.accepted + stats.rejected >= o.max_steps {
            return Err(SimError::Divergence { t, state: y, reason: "step limit reached".into() });
        }
        let last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(SimError::Divergence { t, state: y, reason: format!("step size underflow (h = {h:.3e})") });
        }
        combo(&y, h, &[(A21, &k1)], &mut ys);
        rhs(t + C2 * h, &ys, &mut k2)?;
        combo(&y, h, &[(A31, &k1), (A32, &k2)], &mut ys);
        rhs(t + C3 * h, &ys, &mut k3)?;
        combo(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut ys);
        rhs(t + C4 * h, &ys, &mut k4)?;
        combo(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &mut ys);
        rhs(t + C5 * h, &ys, &mut k5)?;
        combo(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], &mut ys);
        rhs(t + h, &ys, &mut k6)?;
        combo(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)], &mut y1);
        rhs(t + h, &y1, &mut k7)?;
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = o.atol + o.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            let mut rcont: [Vec<f64>; 5] = Default::default();
            rcont[0] = y.clone();
            rcont[1] = (0..n).map(|i| y1[i] - y[i]).collect();
            rcont[2] = (0..n).map(|i| h * k1[i] - rcont[1][i]).collect();
            rcont[3] = (0..n).map(|i| rcont[1][i] - h * k7[i] - rcont[2][i]).collect();
            rcont[4] = (0..n)
                .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                .collect();
            segments.push(Segment { t0: t, h, rcont });
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(h);
            stats.max_step = stats.max_step.max(h);
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            check_state(t, &y, o.blowup)?;
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok(DenseSolution { segments, t0, t1, x0: x0.to_vec(), x1: y, stats })
}

/// Classical RK4 with `steps` equal steps; returns the state at each node.
pub fn rk4_fixed(rhs: &Rhs, t0: f64, x0: &[f64], t1: f64, steps: usize) -> Result<Vec<Vec<f64>>, SimError> {
    if !(t1 > t0) || steps == 0 {
        return Err(SimError::BadHorizon(t1 - t0));
    }
    let n = x0.len();
    let h = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = x0.to_vec();
    out.push(y.clone());
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        rhs(t, &y, &mut k1)?;
        combo(&y, 0.5 * h, &[(1.0, &k1)], &mut tmp);
        rhs(t + 0.5 * h, &tmp, &mut k2)?;
        combo(&y, 0.5 * h, &[(1.0, &k2)], &mut tmp);
        rhs(t + 0.5 * h, &tmp, &mut k3)?;
        combo(&y, h, &[(1.0, &k3)], &mut tmp);
        rhs(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_state(t + h, &y, 1e300)?;
        out.push(y.clone());
    }
    Ok(out)
}
