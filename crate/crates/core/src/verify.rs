//! Numerical certification of the assumptions behind the convergence theory.
//!
//! Exact checks enumerate every outcome of the estimator's randomness
//! through [`Explorer`](crate::random::Explorer), so they run the same code
//! path as the solver. Monte-Carlo checks use 3-standard-error bands.

use serde::{Deserialize, Serialize};

use crate::compression::Quantizer;
use crate::distributed::WorkerShard;
use crate::error::{invalid, Result};
use crate::estimators::{GradientEstimator, TheoryParams};
use crate::problem::{averaged_cocoercivity, ProblemInstance};
use crate::random::{enumerate, SeededRng};
use crate::solver::RunTrace;
use crate::Vector;

/// Outcome-count cap for exact enumeration.
pub const EXACT_LIMIT: usize = 100_000;
pub const EXACT_TOL: f64 = 1e-10;
/// Key-assumption margins within this of zero are reported but pass.
pub const KEY_ASSUMPTION_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CheckMode {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub mode: CheckMode,
    pub trials: usize,
    /// Largest `lhs - rhs` seen. Positive means the inequality failed by
    /// that much. Monte-Carlo checks report it in standard errors beyond 3.
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub details: Vec<String>,
}

impl CheckReport {
    fn new(name: &str, mode: CheckMode, trials: usize, worst: f64, tolerance: f64, details: Vec<String>) -> Self {
        Self { name: name.into(), mode, trials, worst_violation: worst, tolerance, pass: worst <= tolerance, details }
    }
}

/// `E[g] = F(x)` for the estimator's current state.
pub fn check_unbiasedness<E: GradientEstimator>(est: &E, problem: &ProblemInstance, x: &Vector, mode: CheckMode, seed: u64) -> Result<CheckReport> {
    let f = problem.operator().eval_full(x)?;
    match mode {
        CheckMode::Exact => {
            let out = enumerate(EXACT_LIMIT, |r| est.clone().sample(x, r).map(|s| s.g))?;
            let mut mean = Vector::zeros(x.len());
            let mut mass = 0.0;
            for (p, g) in &out {
                mean.axpy(*p, g, 1.0);
                mass += p;
            }
            let err = (mean - &f).norm();
            Ok(CheckReport::new(
                "unbiasedness",
                mode,
                out.len(),
                err,
                EXACT_TOL,
                vec![format!("outcomes = {}, total probability = {mass:.17}", out.len())],
            ))
        }
        CheckMode::MonteCarlo { samples } => {
            let mut rng = SeededRng::new(seed);
            let d = x.len();
            let mut sum = Vector::zeros(d);
            let mut sum_sq = Vector::zeros(d);
            for _ in 0..samples {
                let g = est.clone().sample(x, &mut rng)?.g - &f;
                sum += &g;
                sum_sq += g.component_mul(&g);
            }
            let nf = samples as f64;
            let mut worst = f64::NEG_INFINITY;
            for j in 0..d {
                let mean = sum[j] / nf;
                let var = (sum_sq[j] / nf - mean * mean).max(0.0);
                let se = (var / nf).sqrt();
                let z = if se > 0.0 { mean.abs() / se } else if mean.abs() < 1e-12 { 0.0 } else { f64::INFINITY };
                worst = worst.max(z - 3.0);
            }
            Ok(CheckReport::new("unbiasedness", mode, samples, worst, 0.0, vec!["violation is |mean error| / SE - 3".into()]))
        }
    }
}

/// Sampling of `(x, state)` pairs for [`check_key_assumption`].
#[derive(Clone, Copy, Debug)]
pub struct PointSampler {
    pub points: usize,
    /// Standard deviation of the Gaussian ball around `x*`.
    pub near: f64,
    /// Every tenth point uses this scale instead.
    pub far: f64,
    pub seed: u64,
}

impl PointSampler {
    pub fn new(points: usize, near: f64, seed: u64) -> Self {
        Self { points, near, far: 10.0 * near, seed }
    }
}

/// Both sides of the second-moment bound and of the state recursion.
pub fn check_key_assumption<E: GradientEstimator>(
    est: &E,
    problem: &ProblemInstance,
    tp: &TheoryParams,
    sampler: PointSampler,
    mode: CheckMode,
) -> Result<CheckReport> {
    let xs = problem.x_star()?.clone();
    let op = problem.operator();
    let fstar = op.eval_full(&xs)?;
    let d = xs.len();
    let mut rng = SeededRng::new(sampler.seed);
    let mut worst7 = f64::NEG_INFINITY;
    let mut worst8 = f64::NEG_INFINITY;
    let mut tightest7 = f64::INFINITY;
    for t in 0..sampler.points {
        let scale = if t % 10 == 9 { sampler.far } else { sampler.near };
        let x = &xs + rng.gaussian_vector(d, scale);
        let mut e = est.clone();
        e.scramble(&xs, scale, &mut rng)?;
        let sigma = e.sigma_sq(&xs)?;
        let ip = (op.eval_full(&x)? - &fstar).dot(&(&x - &xs));
        let (lhs7, lhs8, slack) = match mode {
            CheckMode::Exact => {
                let out = enumerate(EXACT_LIMIT, |r| {
                    let mut c = e.clone();
                    let s = c.sample(&x, r)?;
                    Ok(((s.g - &fstar).norm_squared(), c.sigma_sq(&xs)?))
                })?;
                let l7: f64 = out.iter().map(|(p, (a, _))| p * a).sum();
                let l8: f64 = out.iter().map(|(p, (_, b))| p * b).sum();
                (l7, l8, (0.0, 0.0))
            }
            CheckMode::MonteCarlo { samples } => {
                let mut a = Vec::with_capacity(samples);
                let mut b = Vec::with_capacity(samples);
                for _ in 0..samples {
                    let mut c = e.clone();
                    let s = c.sample(&x, &mut rng)?;
                    a.push((s.g - &fstar).norm_squared());
                    b.push(c.sigma_sq(&xs)?);
                }
                let (ma, sa) = mean_se(&a);
                let (mb, sb) = mean_se(&b);
                (ma, mb, (3.0 * sa, 3.0 * sb))
            }
        };
        let rhs7 = 2.0 * tp.a * ip + tp.b * sigma + tp.d1;
        let rhs8 = 2.0 * tp.c * ip + (1.0 - tp.rho) * sigma + tp.d2;
        worst7 = worst7.max(lhs7 - slack.0 - rhs7);
        if rhs7 > 0.0 {
            tightest7 = tightest7.min((rhs7 - lhs7) / rhs7);
        }
        if tp.b > 0.0 {
            worst8 = worst8.max(lhs8 - slack.1 - rhs8);
        }
    }
    let tol = match mode {
        CheckMode::Exact => KEY_ASSUMPTION_TOL,
        CheckMode::MonteCarlo { .. } => 0.0,
    };
    let mut details = vec![format!("second moment: worst lhs - rhs = {worst7:e}, smallest relative slack = {tightest7:e}")];
    if tp.b > 0.0 {
        details.push(format!("state recursion: worst lhs - rhs = {worst8:e}"));
    }
    Ok(CheckReport::new("key_assumption", mode, sampler.points, worst7.max(worst8), tol, details))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Random-point check of quasi-strong monotonicity, star-cocoercivity and
/// the averaged constants. With shards, the worker-level and the
/// component-level averaged constants are checked as well.
pub fn check_operator_conditions(problem: &ProblemInstance, trials: usize, seed: u64, shards: Option<&[WorkerShard]>) -> Result<CheckReport> {
    let c = problem.constants()?;
    let xs = problem.x_star()?;
    let op = problem.operator();
    let fstar = op.eval_full(xs)?;
    let comp_star: Vec<Vector> = op.components().iter().map(|cm| cm.eval(xs)).collect();
    let shard_consts = match shards {
        Some(sh) => {
            let means: Vec<_> = sh.iter().map(|s| s.local.mean_matrix().clone()).collect();
            let w_hat = averaged_cocoercivity(means.iter(), op.mean_matrix())?;
            let tilde = averaged_cocoercivity(sh.iter().flat_map(|s| s.local.components().iter().map(|c| &c.matrix)), op.mean_matrix())?;
            Some((sh, w_hat, tilde))
        }
        None => None,
    };
    let mut rng = SeededRng::new(seed);
    let d = xs.len();
    let mut worst = [f64::NEG_INFINITY; 5];
    for _ in 0..trials {
        let x = xs + rng.gaussian_vector(d, 1.0);
        let e = &x - xs;
        let df = op.eval_full(&x)? - &fstar;
        let ip = df.dot(&e);
        worst[0] = worst[0].max(c.mu * e.norm_squared() - ip);
        worst[1] = worst[1].max(df.norm_squared() - c.ell * ip);
        let avg = op.components().iter().zip(&comp_star).map(|(cm, s)| (cm.eval(&x) - s).norm_squared()).sum::<f64>() / op.n() as f64;
        worst[2] = worst[2].max(avg - c.ell_hat * ip);
        if let Some((sh, w_hat, tilde)) = &shard_consts {
            let mut wsum = 0.0;
            let mut csum = 0.0;
            let mut count = 0usize;
            for s in sh.iter() {
                wsum += (s.local.eval_full(&x)? - s.local.eval_full(xs)?).norm_squared();
                for cm in s.local.components() {
                    csum += (&cm.matrix * &e).norm_squared();
                    count += 1;
                }
            }
            worst[3] = worst[3].max(wsum / sh.len() as f64 - w_hat * ip);
            worst[4] = worst[4].max(csum / count as f64 - tilde * ip);
        }
    }
    let names = ["quasi-strong monotonicity", "star-cocoercivity", "averaged star-cocoercivity", "worker-level averaged", "component-level sum"];
    let used = if shard_consts.is_some() { 5 } else { 3 };
    let details = names.iter().zip(worst.iter()).take(used).map(|(n, w)| format!("{n}: worst lhs - rhs = {w:e}")).collect();
    let overall = worst.iter().take(used).cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckReport::new("operator_conditions", CheckMode::MonteCarlo { samples: trials }, trials, overall, 1e-9, details))
}

/// `E[Q(x)] = x` and `E||Q(x) - x||^2 = omega ||x||^2` on random inputs.
pub fn check_quantizer(q: &Quantizer, d: usize, mode: CheckMode, trials: usize, seed: u64) -> Result<CheckReport> {
    q.validate(d)?;
    let omega = q.omega(d);
    let mut rng = SeededRng::new(seed);
    let mut worst_mean = 0.0f64;
    let mut worst_var = f64::NEG_INFINITY;
    for _ in 0..trials {
        let x = rng.gaussian_vector(d, 1.0);
        match mode {
            CheckMode::Exact => {
                let out = enumerate(EXACT_LIMIT, |r| q.compress(&x, r).map(|c| c.to_dense()))?;
                let mean = out.iter().fold(Vector::zeros(d), |acc, (p, v)| acc + v * *p);
                let var: f64 = out.iter().map(|(p, v)| p * (v - &x).norm_squared()).sum();
                worst_mean = worst_mean.max((mean - &x).norm());
                worst_var = worst_var.max((var - omega * x.norm_squared()).abs());
            }
            CheckMode::MonteCarlo { samples } => {
                let mut sum = Vector::zeros(d);
                let mut errs = Vec::with_capacity(samples);
                for _ in 0..samples {
                    let v = q.compress(&x, &mut rng)?.to_dense();
                    errs.push((&v - &x).norm_squared());
                    sum += v;
                }
                let (m, se) = mean_se(&errs);
                let target = omega * x.norm_squared();
                let z = if se > 0.0 { (m - target).abs() / se } else { 0.0 };
                worst_var = worst_var.max(z - 3.0);
                worst_mean = worst_mean.max((sum / samples as f64 - &x).amax());
            }
        }
    }
    let (worst, tol) = match mode {
        CheckMode::Exact => (worst_mean.max(worst_var), 1e-12),
        CheckMode::MonteCarlo { .. } => (worst_var, 0.0),
    };
    Ok(CheckReport::new(
        "quantizer",
        mode,
        trials,
        worst,
        tol,
        vec![format!("omega = {omega}"), format!("worst mean error = {worst_mean:e}"), format!("worst variance error = {worst_var:e}")],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    /// Contraction factor per unit of `k`.
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `log(value)` against `k`, exponentiated.
pub fn fit_rate_points(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(invalid("window", "need at least two points"));
    }
    if let Some((k, v)) = points.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(invalid("window", format!("value {v} at k = {k} is not positive (saturated)")));
    }
    let n = points.len() as f64;
    let mk = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mk).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mk) * (p.1.ln() - ml)).sum();
    let syy: f64 = points.iter().map(|p| (p.1.ln() - ml).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy <= 1e-300 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { rate: slope.exp(), r_squared })
}

/// Fits the rows of `trace` whose `k` lies in `window`.
pub fn fit_linear_rate(trace: &RunTrace, window: std::ops::Range<usize>) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| window.contains(&r.k))
        .map(|r| (r.k as f64, r.dist_sq.unwrap_or(f64::NAN)))
        .collect();
    fit_rate_points(&pts)
}
