//! Continuous drift-diffusion reference simulator.
//!
//! Euler–Maruyama on `dX = mu dt + sigma dB` with boundaries
//! `A(t) = A(0) * exp(-decay * t)`. Crossings are detected on the time grid
//! only, so hit times carry an O(sqrt(dt)) overshoot bias.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::BoundaryPair;

pub const DEFAULT_DT: f64 = 1e-3;

/// Probabilities reported by [`FirstPassageSummary::hit_time_quantiles`].
pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Error, PartialEq)]
pub enum DdmError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub mu: f64,
    pub sigma: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub x0: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl ProcessParams {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            dt: DEFAULT_DT,
            x0: 0.0,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<(), DdmError> {
        let bad = |m: String| Err(DdmError::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.mu.is_finite() && self.x0.is_finite()) {
            return bad("mu and x0 must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hit {
    Upper,
    Lower,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub hit: Hit,
    pub hit_time: Option<f64>,
}

fn validate_run(params: &ProcessParams, boundaries: &BoundaryPair, decay: f64, max_time: f64) -> Result<usize, DdmError> {
    params.validate()?;
    boundaries
        .validate()
        .map_err(|e| DdmError::InvalidConfig(e.to_string()))?;
    if !(decay.is_finite() && decay >= 0.0) {
        return Err(DdmError::InvalidConfig(format!("decay must be >= 0, got {decay}")));
    }
    if !(max_time.is_finite() && max_time > 0.0) {
        return Err(DdmError::InvalidConfig(format!("max_time must be > 0, got {max_time}")));
    }
    // The epsilon keeps max_time = n * dt from losing its last step to rounding.
    Ok((max_time / params.dt + 1e-9).floor() as usize)
}

fn classify(x: f64, t: f64, b: &BoundaryPair, decay: f64) -> Hit {
    let shrink = (-decay * t).exp();
    if x >= b.upper * shrink {
        Hit::Upper
    } else if x <= b.lower * shrink {
        Hit::Lower
    } else {
        Hit::None
    }
}

/// Walks one path; `record` receives every grid point when present.
///
/// The state is kept as `x0 + mu * t + sigma * sqrt(dt) * sum(xi)`, which is
/// the Euler–Maruyama recursion for constant coefficients written in closed
/// form, so a noiseless path is exactly linear.
fn walk<R: Rng + ?Sized>(
    params: &ProcessParams,
    b: &BoundaryPair,
    decay: f64,
    steps: usize,
    rng: &mut R,
    mut record: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> (Hit, Option<f64>) {
    let sqrt_dt = params.dt.sqrt();
    let mut noise = 0.0;
    if let Some((ts, xs)) = record.as_mut() {
        ts.push(0.0);
        xs.push(params.x0);
    }
    let hit = classify(params.x0, 0.0, b, decay);
    if hit != Hit::None {
        return (hit, Some(0.0));
    }
    for k in 1..=steps {
        if params.sigma > 0.0 {
            let xi: f64 = rng.sample(StandardNormal);
            noise += xi;
        }
        let t = k as f64 * params.dt;
        let x = params.x0 + params.mu * t + params.sigma * sqrt_dt * noise;
        if let Some((ts, xs)) = record.as_mut() {
            ts.push(t);
            xs.push(x);
        }
        let hit = classify(x, t, b, decay);
        if hit != Hit::None {
            return (hit, Some(t));
        }
    }
    (Hit::None, None)
}

/// One sample path, truncated at the first boundary contact or `max_time`.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &ProcessParams,
    boundaries: &BoundaryPair,
    decay: f64,
    max_time: f64,
    rng: &mut R,
) -> Result<DdmPath, DdmError> {
    let steps = validate_run(params, boundaries, decay, max_time)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let (hit, hit_time) = walk(params, boundaries, decay, steps, rng, Some((&mut times, &mut values)));
    Ok(DdmPath {
        times,
        values,
        hit,
        hit_time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageSummary {
    pub n_paths: usize,
    pub p_upper: f64,
    pub p_lower: f64,
    pub p_none: f64,
    /// Mean over paths that hit a boundary; `None` when none did.
    pub mean_hit_time: Option<f64>,
    /// `(level, quantile)` pairs over hit times, empty when nothing hit.
    pub hit_time_quantiles: Vec<(f64, f64)>,
}

pub fn first_passage_stats<R: Rng + ?Sized>(
    params: &ProcessParams,
    boundaries: &BoundaryPair,
    decay: f64,
    max_time: f64,
    n_paths: usize,
    rng: &mut R,
) -> Result<FirstPassageSummary, DdmError> {
    if n_paths == 0 {
        return Err(DdmError::InvalidConfig("n_paths must be >= 1".into()));
    }
    let steps = validate_run(params, boundaries, decay, max_time)?;
    let (mut upper, mut lower) = (0usize, 0usize);
    let mut hit_times = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let (hit, t) = walk(params, boundaries, decay, steps, rng, None);
        match hit {
            Hit::Upper => upper += 1,
            Hit::Lower => lower += 1,
            Hit::None => {}
        }
        if let Some(t) = t {
            hit_times.push(t);
        }
    }
    let n = n_paths as f64;
    hit_times.sort_by(f64::total_cmp);
    let mean_hit_time = (!hit_times.is_empty()).then(|| hit_times.iter().sum::<f64>() / hit_times.len() as f64);
    let hit_time_quantiles = if hit_times.is_empty() {
        Vec::new()
    } else {
        QUANTILE_LEVELS.iter().map(|&q| (q, quantile_sorted(&hit_times, q))).collect()
    };
    Ok(FirstPassageSummary {
        n_paths,
        p_upper: upper as f64 / n,
        p_lower: lower as f64 / n,
        p_none: (n_paths - upper - lower) as f64 / n,
        mean_hit_time,
        hit_time_quantiles,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Hit probability of the upper barrier for constant symmetric boundaries
/// `+-a` starting from 0: `1 / (1 + exp(-2 mu a / sigma^2))`.
pub fn upper_hit_probability(mu: f64, sigma: f64, a: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * mu * a / (sigma * sigma)).exp())
}
