//! The proximal SGDA loop `x+ = prox_{gamma R}(x - gamma g)` and its metrics.

mod gap;
mod trace;

use serde::{Deserialize, Serialize};

use crate::distributed::{DistributedConfig, DistributedEstimator};
use crate::error::{invalid, Error, Result};
use crate::estimators::{EstimatorKind, GradientEstimator, SingleEstimator, TheoryParams};
use crate::linalg::{check_dim, dist_sq};
use crate::problem::{ProblemInstance, Regularizer};
use crate::random::SeededRng;
use crate::Vector;

pub use gap::{restricted_gap, BoxSet, GapResult, GapSettings};
pub use trace::{RunStatus, RunTrace, TraceRow, CSV_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { gamma: f64 },
    /// `1/h` for the first half of the horizon, then `2/(a(kappa + k - k0))`.
    StichDecreasing { h: f64, a: f64, horizon: usize },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { gamma } if !(gamma > 0.0) || !gamma.is_finite() => {
                Err(invalid("gamma", format!("{gamma} must be positive")))
            }
            StepSchedule::StichDecreasing { h, a, .. } if !(a > 0.0 && h >= a) => {
                Err(invalid("schedule", format!("need h >= a > 0, got h = {h}, a = {a}")))
            }
            _ => Ok(()),
        }
    }

    pub fn stepsize_at(&self, k: usize) -> Result<f64> {
        self.validate()?;
        match *self {
            StepSchedule::Constant { gamma } => Ok(gamma),
            StepSchedule::StichDecreasing { h, a, horizon } => {
                if k >= horizon {
                    return Err(invalid("k", format!("{k} beyond the horizon {horizon}")));
                }
                let k0 = horizon.div_ceil(2);
                if horizon as f64 <= h / a || k < k0 {
                    Ok(1.0 / h)
                } else {
                    let kappa = 2.0 * h / a;
                    Ok(2.0 / (a * (kappa + (k - k0) as f64)))
                }
            }
        }
    }

    /// Step size reported on trace rows at and after the horizon.
    fn reported(&self, k: usize) -> Result<f64> {
        match *self {
            StepSchedule::StichDecreasing { horizon, h, .. } if k >= horizon => {
                if horizon == 0 {
                    Ok(1.0 / h)
                } else {
                    self.stepsize_at(horizon - 1)
                }
            }
            _ => self.stepsize_at(k),
        }
    }
}

/// Which estimator drives the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Method {
    Single(EstimatorKind),
    Distributed(DistributedConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Single(k) => k.name(),
            Method::Distributed(c) => c.method.name(),
        }
    }
}

/// Everything a run needs besides the problem and the method.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub iterations: usize,
    /// Stop early once this many oracle calls have been spent.
    pub max_oracle_calls: Option<u64>,
    pub seed: u64,
    pub x0: Vector,
    pub schedule: StepSchedule,
    pub record_every: usize,
    /// Lyapunov weight; `None` takes the method's default `2B/rho`.
    pub lyapunov_m: Option<f64>,
    /// Distances need `x*`; disable to run on problems without one.
    pub track_distance: bool,
    pub gap: Option<GapSettings>,
    pub keep_iterates: bool,
}

impl RunConfig {
    pub fn new(x0: Vector, schedule: StepSchedule, iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            max_oracle_calls: None,
            seed,
            x0,
            schedule,
            record_every: 1,
            lyapunov_m: None,
            track_distance: true,
            gap: None,
            keep_iterates: false,
        }
    }
}

/// `x+ = prox_{gamma R}(x - gamma g)`.
pub fn prox_step(x: &Vector, g: &Vector, gamma: f64, reg: &Regularizer) -> Result<Vector> {
    check_dim(x.len(), g.len())?;
    let mut y = x.clone();
    y.axpy(-gamma, g, 1.0);
    reg.prox_in_place(gamma, &mut y)?;
    Ok(y)
}

/// `V = dist_sq + M gamma^2 sigma_sq`.
pub fn lyapunov(dist_sq: f64, sigma_sq: f64, m: f64, gamma: f64) -> f64 {
    dist_sq + m * gamma * gamma * sigma_sq
}

/// Linear-rate envelope on `E V_k` for a constant step.
pub fn theoretical_envelope(tp: &TheoryParams, mu: f64, gamma: f64, v0: f64, k: usize) -> Result<f64> {
    if tp.b > 0.0 && !(tp.m > tp.b / tp.rho) {
        return Err(invalid("M", format!("{} must exceed B/rho = {}", tp.m, tp.b / tp.rho)));
    }
    let bound = tp.max_stepsize(mu);
    if !(gamma > 0.0) || gamma > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { gamma, bound });
    }
    let r = tp.rate(gamma, mu);
    Ok((1.0 - r).powi(k as i32) * v0 + gamma * gamma * (tp.d1 + tp.m * tp.d2) / r)
}

/// Theory parameters of `method` with its state initialized at `x0`.
pub fn method_theory_params(problem: &ProblemInstance, method: &Method, x0: &Vector) -> Result<TheoryParams> {
    match method {
        Method::Single(kind) => crate::estimators::theory_params(&kind.resolve(problem)?, problem),
        Method::Distributed(dc) => DistributedEstimator::new(dc.clone(), problem.operator(), x0)?.theory_params(problem),
    }
}

/// Builds the estimator and runs the loop.
pub fn run(problem: &ProblemInstance, method: &Method, cfg: &RunConfig) -> Result<RunTrace> {
    match method {
        Method::Single(kind) => {
            let est = SingleEstimator::new(kind.resolve(problem)?, problem.operator(), &cfg.x0)?;
            run_with(problem, est, method.name(), cfg)
        }
        Method::Distributed(dc) => {
            let est = DistributedEstimator::new(dc.clone(), problem.operator(), &cfg.x0)?;
            run_with(problem, est, method.name(), cfg)
        }
    }
}

/// Runs the loop with an already initialized estimator.
pub fn run_with<E: GradientEstimator>(problem: &ProblemInstance, mut est: E, name: &str, cfg: &RunConfig) -> Result<RunTrace> {
    check_dim(problem.dim(), cfg.x0.len())?;
    cfg.schedule.validate()?;
    if cfg.record_every == 0 {
        return Err(invalid("record_every", "must be >= 1"));
    }
    let x_star = if cfg.track_distance { Some(problem.x_star()?.clone()) } else { None };
    let m = match cfg.lyapunov_m {
        Some(m) => m,
        None => match est.theory_params(problem) {
            Ok(tp) => tp.m,
            Err(e) => {
                log::warn!("{name}: no theory parameters ({e}); Lyapunov weight set to 0");
                0.0
            }
        },
    };
    let gap_box = match &cfg.gap {
        Some(g) => Some(g.resolve(problem, &cfg.x0)?),
        None => None,
    };
    let reg = *problem.regularizer();
    let mut rng = SeededRng::new(cfg.seed);
    let mut x = cfg.x0.clone();
    let mut avg = cfg.x0.clone();
    let mut calls = est.init_calls();
    let mut bits = 0u64;
    let mut trace = RunTrace::new(name, cfg.seed, m);
    if let Some(b) = &gap_box {
        trace.gap_box = Some(b.clone());
    }

    let record = |k: usize, x: &Vector, avg: &Vector, est: &E, calls: u64, bits: u64| -> Result<TraceRow> {
        let gamma = cfg.schedule.reported(k)?;
        let (d, s, v) = match &x_star {
            Some(xs) => {
                let d = dist_sq(x, xs);
                let s = est.sigma_sq(xs)?;
                (Some(d), Some(s), Some(lyapunov(d, s, m, gamma)))
            }
            None => (None, None, None),
        };
        let gap = match (&gap_box, &cfg.gap) {
            (Some(b), Some(g)) => Some(restricted_gap(problem, b, avg, g.tol, g.budget)?.value),
            _ => None,
        };
        Ok(TraceRow {
            k,
            gamma,
            dist_sq: d,
            lyapunov: v,
            sigma_sq: s,
            oracle_calls: calls,
            uplink_bits: bits,
            gap,
            x: cfg.keep_iterates.then(|| x.clone()),
        })
    };

    trace.rows.push(record(0, &x, &avg, &est, calls, bits)?);
    let mut done = 0usize;
    for k in 0..cfg.iterations {
        if cfg.max_oracle_calls.is_some_and(|c| calls >= c) {
            break;
        }
        let gamma = cfg.schedule.stepsize_at(k)?;
        let s = est.sample(&x, &mut rng)?;
        calls += s.oracle_calls;
        bits += s.uplink_bits;
        x.axpy(-gamma, &s.g, 1.0);
        reg.prox_in_place(gamma, &mut x)?;
        done = k + 1;
        if x.iter().any(|v| !v.is_finite()) {
            log::warn!("{name} seed {}: non-finite iterate at k = {done}", cfg.seed);
            trace.status = RunStatus::Diverged { iteration: done };
            trace.rows.push(TraceRow {
                k: done,
                gamma,
                dist_sq: None,
                lyapunov: None,
                sigma_sq: None,
                oracle_calls: calls,
                uplink_bits: bits,
                gap: None,
                x: None,
            });
            trace.final_x = x;
            return Ok(trace);
        }
        avg.axpy(1.0 / done as f64, &(&x - &avg), 1.0);
        if done % cfg.record_every == 0 {
            trace.rows.push(record(done, &x, &avg, &est, calls, bits)?);
        }
    }
    if trace.rows.last().map(|r| r.k) != Some(done) {
        trace.rows.push(record(done, &x, &avg, &est, calls, bits)?);
    }
    trace.final_x = x;
    trace.averaged_x = Some(avg);
    Ok(trace)
}
