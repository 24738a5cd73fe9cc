//! Single-process gradient estimators.
//!
//! Each estimator produces an unbiased `g` of `F(x)`, keeps whatever memory
//! it needs between iterations, and reports the Assumption-style sextuple
//! `(A, B, C, rho, D1, D2)` bounding
//!
//! ```text
//! E||g - F(x*)||^2   <= 2A <F(x) - F(x*), x - x*> + B sigma_k^2 + D1
//! E sigma_{k+1}^2    <= 2C <F(x) - F(x*), x - x*> + (1 - rho) sigma_k^2 + D2
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::check_dim;
use crate::problem::{FiniteSumOperator, ProblemInstance};
use crate::random::{Randomness, SeededRng};
use crate::sampling::{scheme_constants, sigma_star_sq, Sampler, SamplingScheme};
use crate::Vector;

/// One estimator output.
#[derive(Clone, Debug)]
pub struct GradientSample {
    pub g: Vector,
    pub oracle_calls: u64,
    pub uplink_bits: u64,
}

/// The constants of the second-moment bound plus the Lyapunov weight `M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub d1: f64,
    pub d2: f64,
    /// Lyapunov weight, `2B/rho` by default and 0 when `B = 0`.
    pub m: f64,
}

impl TheoryParams {
    pub fn new(a: f64, b: f64, c: f64, rho: f64, d1: f64, d2: f64) -> Self {
        let m = if b > 0.0 { 2.0 * b / rho } else { 0.0 };
        Self { a, b, c, rho, d1, d2, m }
    }

    pub fn with_m(mut self, m: f64) -> Result<Self> {
        if self.b > 0.0 && !(m > self.b / self.rho) {
            return Err(invalid("M", format!("{m} must exceed B/rho = {}", self.b / self.rho)));
        }
        self.m = m;
        Ok(self)
    }

    /// Rate term `min{gamma mu, rho - B/M}`.
    pub fn rate(&self, gamma: f64, mu: f64) -> f64 {
        let state = if self.b > 0.0 { self.rho - self.b / self.m } else { f64::INFINITY };
        (gamma * mu).min(state)
    }

    /// Largest constant step allowed by the envelope: `min{1/mu, 1/(2(A + C M))}`.
    pub fn max_stepsize(&self, mu: f64) -> f64 {
        (1.0 / mu).min(1.0 / (2.0 * (self.a + self.c * self.m)))
    }

    /// Constant step prescribed with `M = 2B/rho`: `min{1/mu, 1/(2(A + 2BC/rho))}`.
    pub fn theory_stepsize(&self, mu: f64) -> f64 {
        (1.0 / mu).min(1.0 / (2.0 * (self.a + 2.0 * self.b * self.c / self.rho)))
    }

    /// Ceiling `h = max{2(A + 2BC/rho), 2mu/rho}` of the decreasing schedule.
    pub fn decreasing_ceiling(&self, mu: f64) -> f64 {
        (2.0 * (self.a + 2.0 * self.b * self.c / self.rho)).max(2.0 * mu / self.rho)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    FullBatch,
    SgdaAs { scheme: SamplingScheme },
    /// Loopless SVRG with restart probability `p`.
    Lsvrgda { p: f64 },
    SagaSgda,
    /// Random coordinate of `F`, scaled by `d`.
    Csgda,
    /// Coordinate method with a learned shift.
    SegaSgda,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::FullBatch => "full_batch",
            EstimatorKind::SgdaAs { .. } => "sgda_as",
            EstimatorKind::Lsvrgda { .. } => "lsvrgda",
            EstimatorKind::SagaSgda => "saga_sgda",
            EstimatorKind::Csgda => "csgda",
            EstimatorKind::SegaSgda => "sega_sgda",
        }
    }

    /// Fills problem-dependent defaults such as importance weights.
    pub fn resolve(&self, problem: &ProblemInstance) -> Result<Self> {
        Ok(match self {
            EstimatorKind::SgdaAs { scheme } => EstimatorKind::SgdaAs { scheme: scheme.resolve(problem.constants()?) },
            other => other.clone(),
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            EstimatorKind::SgdaAs { scheme } => scheme.validate(n),
            EstimatorKind::Lsvrgda { p } if !(*p > 0.0 && *p <= 1.0) => Err(invalid("p", format!("{p} not in (0, 1]"))),
            _ => Ok(()),
        }
    }
}

/// Behaviour shared by single-process and distributed estimators.
pub trait GradientEstimator: Clone {
    fn dim(&self) -> usize;
    /// Oracle calls spent when the state was initialized.
    fn init_calls(&self) -> u64;
    fn sample(&mut self, x: &Vector, rng: &mut dyn Randomness) -> Result<GradientSample>;
    /// `sigma_k^2` of the current state; 0 for stateless estimators.
    fn sigma_sq(&self, x_star: &Vector) -> Result<f64>;
    /// Puts the memory at random points around `x_star`, for checks that
    /// need arbitrary states.
    fn scramble(&mut self, x_star: &Vector, scale: f64, rng: &mut SeededRng) -> Result<()>;
    fn theory_params(&self, problem: &ProblemInstance) -> Result<TheoryParams>;
    /// Server-side consistency check after a round (distributed only).
    fn state_consistency(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug)]
enum State {
    Stateless,
    Sampled(Sampler),
    Svrg { anchor: Vector, anchor_value: Vector },
    Saga { table: Vec<Vector>, mean: Vector, updates: usize },
    Sega { h: Vector },
}

/// A single-process estimator bound to an operator.
#[derive(Clone, Debug)]
pub struct SingleEstimator<'a> {
    kind: EstimatorKind,
    op: &'a FiniteSumOperator,
    state: State,
    init_calls: u64,
    coordinate_cost: u64,
}

impl<'a> SingleEstimator<'a> {
    /// Initializes the state at `x0`.
    pub fn new(kind: EstimatorKind, op: &'a FiniteSumOperator, x0: &Vector) -> Result<Self> {
        kind.validate(op.n())?;
        check_dim(op.dim(), x0.len())?;
        let n = op.n() as u64;
        let (state, init_calls) = match &kind {
            EstimatorKind::FullBatch | EstimatorKind::Csgda => (State::Stateless, 0),
            EstimatorKind::SgdaAs { scheme } => (State::Sampled(scheme.sampler(op.n())?), 0),
            EstimatorKind::Lsvrgda { .. } => (State::Svrg { anchor: x0.clone(), anchor_value: op.eval_full(x0)? }, n),
            EstimatorKind::SagaSgda => {
                let table: Vec<Vector> = op.components().iter().map(|c| c.eval(x0)).collect();
                let mean = mean_of(&table);
                (State::Saga { table, mean, updates: 0 }, n)
            }
            EstimatorKind::SegaSgda => (State::Sega { h: Vector::zeros(op.dim()) }, 0),
        };
        Ok(Self { kind, op, state, init_calls, coordinate_cost: 1 })
    }

    /// Oracle calls charged per coordinate query (default 1).
    pub fn with_coordinate_cost(mut self, cost: u64) -> Self {
        self.coordinate_cost = cost;
        self
    }

    pub fn kind(&self) -> &EstimatorKind {
        &self.kind
    }

    /// SVRG anchor, if any.
    pub fn anchor(&self) -> Option<&Vector> {
        match &self.state {
            State::Svrg { anchor, .. } => Some(anchor),
            _ => None,
        }
    }

    /// SEGA shift, if any.
    pub fn shift(&self) -> Option<&Vector> {
        match &self.state {
            State::Sega { h } => Some(h),
            _ => None,
        }
    }

    pub fn set_shift(&mut self, new_h: Vector) -> Result<()> {
        match &mut self.state {
            State::Sega { h } => {
                check_dim(h.len(), new_h.len())?;
                *h = new_h;
                Ok(())
            }
            _ => Err(invalid("state", "estimator has no shift")),
        }
    }

    /// Moves the SVRG anchor (recomputing `F(w)`, not counted).
    pub fn set_anchor(&mut self, w: Vector) -> Result<()> {
        let value = self.op.eval_full(&w)?;
        match &mut self.state {
            State::Svrg { anchor, anchor_value } => {
                *anchor = w;
                *anchor_value = value;
                Ok(())
            }
            _ => Err(invalid("state", "estimator has no anchor")),
        }
    }

    /// SAGA drift between the running mean and the exact table mean.
    pub fn saga_drift(&self) -> Option<f64> {
        match &self.state {
            State::Saga { table, mean, .. } => Some((mean_of(table) - mean).amax()),
            _ => None,
        }
    }
}

fn mean_of(vs: &[Vector]) -> Vector {
    let mut m = Vector::zeros(vs[0].len());
    for v in vs {
        m += v;
    }
    m / vs.len() as f64
}

impl GradientEstimator for SingleEstimator<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn init_calls(&self) -> u64 {
        self.init_calls
    }

    fn sample(&mut self, x: &Vector, rng: &mut dyn Randomness) -> Result<GradientSample> {
        check_dim(self.op.dim(), x.len())?;
        let op = self.op;
        let n = op.n();
        let d = op.dim();
        let (g, calls) = match (&self.kind, &mut self.state) {
            (EstimatorKind::FullBatch, _) => (op.eval_full(x)?, n as u64),
            (EstimatorKind::SgdaAs { .. }, State::Sampled(sampler)) => {
                let draw = sampler.draw(rng);
                let mut g = Vector::zeros(d);
                for (&i, &w) in draw.indices.iter().zip(&draw.weights) {
                    let c = &op.components()[i];
                    let coef = w / n as f64;
                    g.gemv(coef, &c.matrix, x, 1.0);
                    g.axpy(coef, &c.offset, 1.0);
                }
                (g, draw.indices.len() as u64)
            }
            (EstimatorKind::Lsvrgda { p }, State::Svrg { anchor, anchor_value }) => {
                let j = rng.index(n);
                let c = &op.components()[j];
                // F_j(x) - F_j(w) = A_j (x - w)
                let mut g = anchor_value.clone();
                g.gemv(1.0, &c.matrix, &(x - &*anchor), 1.0);
                let mut calls = 2;
                if rng.bernoulli(*p) {
                    *anchor = x.clone();
                    *anchor_value = op.eval_full(x)?;
                    calls += n as u64;
                }
                (g, calls)
            }
            (EstimatorKind::SagaSgda, State::Saga { table, mean, updates }) => {
                let j = rng.index(n);
                let fresh = op.components()[j].eval(x);
                let delta = &fresh - &table[j];
                let g = &delta + &*mean;
                mean.axpy(1.0 / n as f64, &delta, 1.0);
                table[j] = fresh;
                *updates += 1;
                if *updates % n == 0 {
                    *mean = mean_of(table);
                }
                (g, 1)
            }
            (EstimatorKind::Csgda, _) => {
                let j = rng.index(d);
                let mut g = Vector::zeros(d);
                g[j] = d as f64 * op.eval_coordinate(j, x);
                (g, self.coordinate_cost)
            }
            (EstimatorKind::SegaSgda, State::Sega { h }) => {
                let j = rng.index(d);
                let fj = op.eval_coordinate(j, x);
                let mut g = h.clone();
                g[j] += d as f64 * (fj - h[j]);
                h[j] = fj;
                (g, self.coordinate_cost)
            }
            _ => return Err(invalid("state", "estimator state does not match its kind")),
        };
        Ok(GradientSample { g, oracle_calls: calls, uplink_bits: 0 })
    }

    fn sigma_sq(&self, x_star: &Vector) -> Result<f64> {
        check_dim(self.op.dim(), x_star.len())?;
        let op = self.op;
        Ok(match &self.state {
            State::Stateless | State::Sampled(_) => 0.0,
            State::Svrg { anchor, .. } => {
                let diff = anchor - x_star;
                op.components().iter().map(|c| (&c.matrix * &diff).norm_squared()).sum::<f64>() / op.n() as f64
            }
            State::Saga { table, .. } => {
                table.iter().zip(op.components()).map(|(t, c)| (t - c.eval(x_star)).norm_squared()).sum::<f64>()
                    / op.n() as f64
            }
            State::Sega { h } => (h - op.eval_mean(x_star)).norm_squared(),
        })
    }

    fn scramble(&mut self, x_star: &Vector, scale: f64, rng: &mut SeededRng) -> Result<()> {
        let op = self.op;
        let d = op.dim();
        match &mut self.state {
            State::Stateless | State::Sampled(_) => {}
            State::Svrg { anchor, anchor_value } => {
                *anchor = x_star + rng.gaussian_vector(d, scale);
                *anchor_value = op.eval_full(anchor)?;
            }
            State::Saga { table, mean, updates } => {
                for (t, c) in table.iter_mut().zip(op.components()) {
                    *t = c.eval(&(x_star + rng.gaussian_vector(d, scale)));
                }
                *mean = mean_of(table);
                *updates = 0;
            }
            State::Sega { h } => {
                *h = op.eval_mean(x_star) + rng.gaussian_vector(d, scale);
            }
        }
        Ok(())
    }

    fn theory_params(&self, problem: &ProblemInstance) -> Result<TheoryParams> {
        theory_params(&self.kind, problem)
    }
}

/// Sextuple certified for each single-process estimator.
pub fn theory_params(kind: &EstimatorKind, problem: &ProblemInstance) -> Result<TheoryParams> {
    let c = problem.constants()?;
    let n = problem.n() as f64;
    let d = problem.dim() as f64;
    Ok(match kind {
        EstimatorKind::FullBatch => TheoryParams::new(c.ell, 0.0, 0.0, 1.0, 0.0, 0.0),
        EstimatorKind::SgdaAs { scheme } => {
            let sc = scheme_constants(scheme, c, problem.n())?;
            TheoryParams::new(sc.ell_d, 0.0, 0.0, 1.0, 2.0 * sigma_star_sq(scheme, problem)?, 0.0)
        }
        EstimatorKind::Lsvrgda { p } => TheoryParams::new(c.ell_hat, 2.0, p * c.ell_hat / 2.0, *p, 0.0, 0.0),
        EstimatorKind::SagaSgda => TheoryParams::new(c.ell_hat, 2.0, c.ell_hat / (2.0 * n), 1.0 / n, 0.0, 0.0),
        EstimatorKind::Csgda => {
            let fstar = problem.operator().eval_mean(problem.x_star()?);
            TheoryParams::new(d * c.ell, 0.0, 0.0, 1.0, 2.0 * d * fstar.norm_squared(), 0.0)
        }
        EstimatorKind::SegaSgda => TheoryParams::new(d * c.ell, 2.0 * d, c.ell / (2.0 * d), 1.0 / d, 0.0, 0.0),
    })
}
