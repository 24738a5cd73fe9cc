//! Restricted gap `max_{u in C} <F(u), z - u> + R(z) - R(u)` over a box `C`.
//!
//! For affine `F(u) = A u + b` the objective is concave in `u` whenever the
//! symmetric part of `A` is positive semidefinite, with quadratic term
//! `-u^T sym(A) u`. It is maximized by accelerated proximal gradient ascent
//! with restarts from several points, and the best objective value seen is
//! returned. That value is always a lower bound on the true gap.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{check_dim, max_eigenvalue, min_eigenvalue, sym_part};
use crate::problem::ProblemInstance;
use crate::Vector;

/// `{u : ||u - center||_inf <= radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub center: Vector,
    pub radius: f64,
}

impl BoxSet {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("radius", format!("{radius} must be positive and finite")));
        }
        Ok(Self { center, radius })
    }

    /// Box around `problem`'s solution, checked to contain it.
    pub fn around_solution(problem: &ProblemInstance, center: Vector, radius: f64) -> Result<Self> {
        let b = Self::new(center, radius)?;
        let xs = problem.x_star()?;
        if !b.contains(xs) {
            return Err(invalid("box", "the box must contain the reference solution"));
        }
        Ok(b)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        (x - &self.center).amax() <= self.radius * (1.0 + 1e-12)
    }
}

/// How the solver evaluates the gap on its averaged iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSettings {
    /// Box radius; default `2 ||x0 - x*||_inf` around `x*`.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_budget() -> usize {
    10_000
}

impl Default for GapSettings {
    fn default() -> Self {
        Self { radius: None, tol: default_tol(), budget: default_budget() }
    }
}

impl GapSettings {
    pub fn resolve(&self, problem: &ProblemInstance, x0: &Vector) -> Result<BoxSet> {
        let xs = problem.x_star()?.clone();
        let r = match self.radius {
            Some(r) => r,
            None => {
                let r = 2.0 * (x0 - &xs).amax();
                if r > 0.0 {
                    r
                } else {
                    1.0
                }
            }
        };
        BoxSet::around_solution(problem, xs, r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapResult {
    pub value: f64,
    /// Some start hit the budget before the gradient mapping fell below `tol`.
    pub approximate: bool,
    pub iterations: usize,
}

pub fn restricted_gap(problem: &ProblemInstance, set: &BoxSet, z: &Vector, tol: f64, budget: usize) -> Result<GapResult> {
    let op = problem.operator();
    let d = op.dim();
    check_dim(d, z.len())?;
    check_dim(d, set.center.len())?;
    let a = op.mean_matrix();
    let b = op.mean_offset();
    let s = sym_part(a);
    if min_eigenvalue(&s) < -1e-10 {
        return Err(invalid("operator", "restricted gap needs a monotone operator"));
    }
    let reg = *problem.regularizer();
    let (lambda, r) = (reg.lambda(), reg.radius());
    let lo: Vec<f64> = set.center.iter().map(|c| (c - set.radius).max(-r)).collect();
    let hi: Vec<f64> = set.center.iter().map(|c| (c + set.radius).min(r)).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Err(invalid("box", "box does not meet the domain of R"));
    }
    let rz = reg.value(z);
    let phi = |u: &Vector| -> f64 {
        let f = op.eval_mean(u);
        f.dot(&(z - u)) + rz - reg.value(u)
    };
    let lin = a.transpose() * z - b;
    let grad = |u: &Vector| -> Vector { &lin - (&s * u) * 2.0 };
    let lip = 2.0 * max_eigenvalue(&s);
    let eta = if lip > 1e-14 { 1.0 / lip } else { 1e6 * (1.0 + set.radius) };
    let step = |v: Vector| -> Vector {
        Vector::from_iterator(
            d,
            v.iter().enumerate().map(|(j, &x)| (x.signum() * (x.abs() - eta * lambda).max(0.0)).clamp(lo[j], hi[j])),
        )
    };
    let clip = |v: &Vector| -> Vector { Vector::from_iterator(d, v.iter().enumerate().map(|(j, &x)| x.clamp(lo[j], hi[j]))) };

    let mut starts = vec![clip(&set.center), clip(z)];
    if let Ok(xs) = problem.x_star() {
        starts.push(clip(xs));
    }
    for j in 0..d {
        for sgn in [-1.0, 1.0] {
            let mut c = set.center.clone();
            c[j] += sgn * set.radius;
            starts.push(clip(&c));
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut approximate = false;
    let mut total = 0usize;
    for start in starts {
        let mut u = start;
        let mut fu = phi(&u);
        best = best.max(fu);
        let mut y = u.clone();
        let mut t = 1.0f64;
        let mut converged = false;
        for _ in 0..budget {
            total += 1;
            let gy = grad(&y);
            let u_new = step(&y + gy * eta);
            let gm = (&u_new - &y).norm() / eta;
            let f_new = phi(&u_new);
            best = best.max(f_new);
            if gm <= tol {
                converged = true;
                break;
            }
            if f_new < fu {
                // Momentum overshot: restart from the last accepted point.
                y = u.clone();
                t = 1.0;
                continue;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &u_new + (&u_new - &u) * ((t - 1.0) / t_new);
            u = u_new;
            fu = f_new;
            t = t_new;
        }
        approximate |= !converged;
    }
    Ok(GapResult { value: best, approximate, iterations: total })
}
