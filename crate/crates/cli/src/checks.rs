//! Assumption checks for the problem and methods of an experiment.

use std::path::Path;

use anyhow::{Context, Result};

use unisgda_core::distributed::partition;
use unisgda_core::verify::{
    check_key_assumption, check_operator_conditions, check_quantizer, check_unbiasedness, CheckMode, CheckReport,
    PointSampler,
};
use unisgda_core::{
    method_theory_params, DistributedEstimator, Error, GradientEstimator, Method, ProblemInstance, SeededRng,
    SingleEstimator, Vector,
};

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Sampled `(x, state)` pairs per key-assumption check.
    pub points: usize,
    /// Draws per point when a check falls back to Monte-Carlo.
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { points: 200, samples: 20_000, seed: 0 }
    }
}

fn needs_fallback(e: &Error) -> bool {
    matches!(e, Error::EnumerationTooLarge { .. } | Error::ContinuousRandomness)
}

/// Exact when the randomness can be enumerated, Monte-Carlo otherwise.
fn exact_or_mc(samples: usize, f: impl Fn(CheckMode) -> unisgda_core::Result<CheckReport>) -> Result<CheckReport> {
    match f(CheckMode::Exact) {
        Err(e) if needs_fallback(&e) => Ok(f(CheckMode::MonteCarlo { samples })?),
        other => Ok(other?),
    }
}

fn estimator_checks<E: GradientEstimator>(
    est: &E,
    label: &str,
    problem: &ProblemInstance,
    method: &Method,
    x0: &Vector,
    opts: &VerifyOptions,
) -> Result<Vec<CheckReport>> {
    let xs = problem.x_star()?.clone();
    let scale = (x0 - &xs).norm().max(1.0) / (xs.len() as f64).sqrt();
    let mut rng = SeededRng::new(opts.seed);
    let mut out = Vec::new();

    let mut worst: Option<CheckReport> = None;
    for t in 0..5u64 {
        let x = &xs + rng.gaussian_vector(xs.len(), scale);
        let mut e = est.clone();
        e.scramble(&xs, scale, &mut rng)?;
        let r = exact_or_mc(opts.samples, |mode| check_unbiasedness(&e, problem, &x, mode, opts.seed + t))?;
        if worst.as_ref().map_or(true, |w| r.worst_violation > w.worst_violation || !r.pass) {
            worst = Some(r);
        }
    }
    if let Some(mut r) = worst {
        r.name = format!("{label}: unbiasedness");
        out.push(r);
    }

    let tp = method_theory_params(problem, method, x0)?;
    let sampler = PointSampler::new(opts.points, scale, opts.seed);
    let mut r = match check_key_assumption(est, problem, &tp, sampler, CheckMode::Exact) {
        Err(e) if needs_fallback(&e) => {
            let small = PointSampler::new(opts.points.min(20), scale, opts.seed);
            check_key_assumption(est, problem, &tp, small, CheckMode::MonteCarlo { samples: opts.samples })?
        }
        other => other?,
    };
    r.name = format!("{label}: key assumption");
    r.details.push(format!("theory parameters {tp:?}"));
    out.push(r);
    Ok(out)
}

/// Operator conditions, then unbiasedness, the key assumption and the
/// quantizer moments for every method of `cfg`.
pub fn verify_experiment(cfg: &ExperimentConfig, base: &Path, opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    cfg.validate()?;
    let problem = cfg.problem.build(base)?;
    let x0 = cfg.x0.build(problem.dim())?;
    let methods = cfg.resolve_methods(&problem, &x0)?;
    let mut reports = Vec::new();

    let mut seen_workers = Vec::new();
    let mut seen_quantizers = Vec::new();
    for m in &methods {
        if let Method::Distributed(dc) = &m.method {
            if !seen_workers.contains(&dc.n_workers) {
                seen_workers.push(dc.n_workers);
            }
            if !seen_quantizers.contains(&dc.quantizer) {
                seen_quantizers.push(dc.quantizer);
            }
        }
    }
    let mut r = check_operator_conditions(&problem, 1000, opts.seed, None)?;
    r.name = "operator conditions".into();
    reports.push(r);
    for w in seen_workers {
        let shards = partition(problem.operator(), w)?;
        let mut r = check_operator_conditions(&problem, 1000, opts.seed, Some(&shards))?;
        r.name = format!("operator conditions, {w} workers");
        reports.push(r);
    }
    for q in seen_quantizers {
        let mut r = exact_or_mc(opts.samples, |mode| check_quantizer(&q, problem.dim(), mode, 20, opts.seed))?;
        r.name = format!("quantizer {q:?}");
        reports.push(r);
    }

    // Grid variants share the estimator, so check each label stem once.
    let mut done = Vec::new();
    for m in &methods {
        if done.contains(&m.method) {
            continue;
        }
        done.push(m.method.clone());
        let label = m.label.clone();
        let checks = match &m.method {
            Method::Single(kind) => {
                let e = SingleEstimator::new(kind.clone(), problem.operator(), &x0)?;
                estimator_checks(&e, &label, &problem, &m.method, &x0, opts)
            }
            Method::Distributed(dc) => {
                let e = DistributedEstimator::new(dc.clone(), problem.operator(), &x0)?;
                estimator_checks(&e, &label, &problem, &m.method, &x0, opts)
            }
        }
        .with_context(|| format!("checking {label}"))?;
        reports.extend(checks);
    }
    Ok(reports)
}
