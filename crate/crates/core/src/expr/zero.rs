//! Zero testing: exact on the rational fragment, seeded sampling elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{canon, Expr, ExprError, ParamValues, Rational};

/// Smallest |value| accepted as a nonvanishing witness.
pub const WITNESS_THRESHOLD: f64 = 1e-8;

const DEFAULT_STATE_RANGE: (f64, f64) = (-3.0, 3.0);
const PARAM_UPPER: f64 = 3.0;

/// Where and how sample points are drawn.
#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub seed: u64,
    pub samples: usize,
    /// Per-coordinate sampling intervals; coordinates beyond the list use [-3, 3].
    pub state_box: Vec<(f64, f64)>,
    /// Parameters with a value are held fixed; the rest are drawn from (0, 3].
    pub params: ParamValues,
    /// Minimum number of state coordinates to sample.
    pub dim: usize,
}

impl SampleConfig {
    pub fn new(seed: u64) -> Self {
        SampleConfig {
            seed,
            samples: 32,
            state_box: Vec::new(),
            params: ParamValues::new(),
            dim: 0,
        }
    }

    pub fn with_box(mut self, b: Vec<(f64, f64)>) -> Self {
        self.state_box = b;
        self
    }

    pub fn with_params(mut self, p: ParamValues) -> Self {
        self.params = p;
        self
    }

    pub fn with_dim(mut self, n: usize) -> Self {
        self.dim = n;
        self
    }

    pub fn with_samples(mut self, k: usize) -> Self {
        self.samples = k;
        self
    }

    fn range(&self, i: usize) -> (f64, f64) {
        self.state_box.get(i).copied().unwrap_or(DEFAULT_STATE_RANGE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub point: Vec<f64>,
    pub params: ParamValues,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum ZeroStatus {
    ProvenZero,
    ProvenNonzeroConstant { value: String },
    SampledZero { samples: usize, max_abs: f64 },
    SampledNonzero { witness: Sample },
}

impl ZeroStatus {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroStatus::ProvenZero | ZeroStatus::SampledZero { .. })
    }

    pub fn is_proven(&self) -> bool {
        matches!(self, ZeroStatus::ProvenZero | ZeroStatus::ProvenNonzeroConstant { .. })
    }
}

/// Evaluates `e` at `cfg.samples` seeded points, resampling points where
/// evaluation fails. Errors only when every attempt fails.
pub fn sample_values(e: &Expr, cfg: &SampleConfig) -> Result<Vec<Sample>, ExprError> {
    let dim = cfg.dim.max(e.max_var().map_or(0, |m| m + 1));
    let free: Vec<String> = e
        .params()
        .into_iter()
        .filter(|p| !cfg.params.contains_key(p))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_attempts = cfg.samples.max(1) * 20;
    let mut out = Vec::with_capacity(cfg.samples);
    let mut attempts = 0;
    while out.len() < cfg.samples && attempts < max_attempts {
        attempts += 1;
        let point: Vec<f64> = (0..dim)
            .map(|i| {
                let (lo, hi) = cfg.range(i);
                lo + (hi - lo) * rng.random::<f64>()
            })
            .collect();
        let mut params = cfg.params.clone();
        for p in &free {
            params.insert(p.clone(), PARAM_UPPER * (1.0 - rng.random::<f64>()));
        }
        if let Ok(value) = e.eval(&point, &params) {
            out.push(Sample { point, params, value });
        }
    }
    if out.is_empty() {
        return Err(ExprError::Inconclusive { attempts });
    }
    Ok(out)
}

/// Zero test with default sampling (state in [-3, 3]^n, parameters in (0, 3]).
pub fn is_zero(e: &Expr, seed: u64) -> Result<ZeroStatus, ExprError> {
    is_zero_with(e, &SampleConfig::new(seed))
}

pub fn is_zero_with(e: &Expr, cfg: &SampleConfig) -> Result<ZeroStatus, ExprError> {
    let r = canon::to_ratfn(e);
    if r.is_zero() {
        return Ok(ZeroStatus::ProvenZero);
    }
    if let Some(c) = r.as_constant() {
        return Ok(ZeroStatus::ProvenNonzeroConstant { value: fmt_rational(&c) });
    }
    let normalized = r.to_expr();
    let samples = sample_values(&normalized, cfg)?;
    let n = samples.len();
    let mut max_abs = 0.0f64;
    let mut best: Option<Sample> = None;
    for s in samples {
        let a = s.value.abs();
        if a > max_abs || best.is_none() {
            max_abs = max_abs.max(a);
            best = Some(s);
        }
    }
    if max_abs > WITNESS_THRESHOLD {
        return Ok(ZeroStatus::SampledNonzero { witness: best.unwrap() });
    }
    // A nonzero rational function cannot vanish at every generic point;
    // tiny values there mean the sample set was unlucky, not that it is zero.
    if !normalized.has_calls() {
        return Err(ExprError::Inconclusive { attempts: n });
    }
    Ok(ZeroStatus::SampledZero { samples: n, max_abs })
}

fn fmt_rational(c: &Rational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}
