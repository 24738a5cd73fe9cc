//! Arbitrary sampling for the finite-sum estimator.
//!
//! A draw is a multiset of indices with weights `xi_i` such that
//! `E[xi_i] = 1`. The estimator is then `(1/n) sum_t xi_t F_{i_t}(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{ProblemConstants, ProblemInstance};
use crate::random::Randomness;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingScheme {
    Uniform {
        b: usize,
        #[serde(default = "yes")]
        with_replacement: bool,
    },
    /// `b` i.i.d. draws with `P(i)` proportional to `weights[i]`. An empty
    /// list stands for the component constants `ell_i`, see [`SamplingScheme::resolve`].
    Importance {
        #[serde(default)]
        weights: Vec<f64>,
        b: usize,
    },
}

fn yes() -> bool {
    true
}

impl SamplingScheme {
    pub fn uniform(b: usize) -> Self {
        SamplingScheme::Uniform { b, with_replacement: true }
    }

    pub fn without_replacement(b: usize) -> Self {
        SamplingScheme::Uniform { b, with_replacement: false }
    }

    /// Importance sampling with `P(i) = ell_i / (n ell_bar)`.
    pub fn importance(constants: &ProblemConstants, b: usize) -> Self {
        SamplingScheme::Importance { weights: constants.ell_i.clone(), b }
    }

    /// Fills empty importance weights with `ell_i`.
    pub fn resolve(&self, constants: &ProblemConstants) -> Self {
        match self {
            SamplingScheme::Importance { weights, b } if weights.is_empty() => Self::importance(constants, *b),
            other => other.clone(),
        }
    }

    pub fn batch(&self) -> usize {
        match self {
            SamplingScheme::Uniform { b, .. } | SamplingScheme::Importance { b, .. } => *b,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let b = self.batch();
        if b == 0 {
            return Err(invalid("b", "batch size must be >= 1"));
        }
        match self {
            SamplingScheme::Uniform { with_replacement: false, .. } if b > n => {
                Err(invalid("b", format!("{b} > n = {n} without replacement")))
            }
            SamplingScheme::Importance { weights, .. } => {
                if weights.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(invalid("weights", "importance weights must be positive and finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Sampling probabilities of a single draw.
    pub fn probabilities(&self, n: usize) -> Vec<f64> {
        match self {
            SamplingScheme::Uniform { .. } => vec![1.0 / n as f64; n],
            SamplingScheme::Importance { weights, .. } => {
                let total: f64 = weights.iter().sum();
                weights.iter().map(|w| w / total).collect()
            }
        }
    }

    pub fn sampler(&self, n: usize) -> Result<Sampler> {
        self.validate(n)?;
        let cumulative = match self {
            SamplingScheme::Importance { weights, .. } => {
                let mut acc = 0.0;
                weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Ok(Sampler { scheme: self.clone(), n, probs: self.probabilities(n), cumulative })
    }
}

/// Indices and their reformulation weights `xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingDraw {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// A validated scheme with its lookup tables.
#[derive(Clone, Debug)]
pub struct Sampler {
    scheme: SamplingScheme,
    n: usize,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Sampler {
    pub fn scheme(&self) -> &SamplingScheme {
        &self.scheme
    }

    pub fn draw(&self, rng: &mut dyn Randomness) -> SamplingDraw {
        let n = self.n;
        let b = self.scheme.batch();
        match &self.scheme {
            SamplingScheme::Uniform { with_replacement: true, .. } => {
                let indices: Vec<usize> = (0..b).map(|_| rng.index(n)).collect();
                SamplingDraw { indices, weights: vec![n as f64 / b as f64; b] }
            }
            SamplingScheme::Uniform { with_replacement: false, .. } => {
                let indices = rng.subset(n, b);
                SamplingDraw { indices, weights: vec![n as f64 / b as f64; b] }
            }
            SamplingScheme::Importance { .. } => {
                let indices: Vec<usize> = (0..b).map(|_| rng.weighted(&self.cumulative)).collect();
                let weights = indices.iter().map(|&i| 1.0 / (self.probs[i] * b as f64)).collect();
                SamplingDraw { indices, weights }
            }
        }
    }
}

/// `ell_D` and the factor that multiplies the single-draw variance at `x*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConstants {
    pub ell_d: f64,
    pub sigma_scale: f64,
}

pub fn scheme_constants(scheme: &SamplingScheme, constants: &ProblemConstants, n: usize) -> Result<SchemeConstants> {
    scheme.validate(n)?;
    let b = scheme.batch() as f64;
    let nf = n as f64;
    Ok(match scheme {
        SamplingScheme::Uniform { with_replacement: true, .. } => {
            SchemeConstants { ell_d: constants.ell_max, sigma_scale: 1.0 / b }
        }
        SamplingScheme::Uniform { with_replacement: false, .. } => {
            if n == 1 {
                SchemeConstants { ell_d: constants.ell, sigma_scale: 0.0 }
            } else {
                let ell_d = nf * (b - 1.0) / (b * (nf - 1.0)) * constants.ell
                    + (nf - b) / (b * (nf - 1.0)) * constants.ell_max;
                SchemeConstants { ell_d, sigma_scale: (nf - b) / (b * (nf - 1.0)) }
            }
        }
        SamplingScheme::Importance { .. } => {
            // max_i ell_i / (n p_i); equals ell_bar when p is proportional to ell_i.
            let probs = scheme.probabilities(n);
            let ell_d = constants.ell_i.iter().zip(&probs).map(|(l, p)| l / (nf * p)).fold(0.0, f64::max);
            SchemeConstants { ell_d, sigma_scale: 1.0 / b }
        }
    })
}

/// Variance of the single-draw estimator at `x*`, times the batch factor.
pub fn sigma_star_sq(scheme: &SamplingScheme, problem: &ProblemInstance) -> Result<f64> {
    let n = problem.n();
    let sc = scheme_constants(scheme, problem.constants()?, n)?;
    let x = problem.x_star()?;
    let op = problem.operator();
    let f = op.eval_full(x)?;
    let probs = scheme.probabilities(n);
    let mut single = 0.0;
    for (i, p) in probs.iter().enumerate() {
        let fi = op.eval_component(i, x)?;
        single += p * (fi / (n as f64 * p) - &f).norm_squared();
    }
    Ok(single * sc.sigma_scale)
}

/// Uniform-sampling variance at `x*`: `(1/n) sum ||F_i(x*) - F(x*)||^2`.
pub fn sigma_us_sq(problem: &ProblemInstance) -> Result<f64> {
    sigma_star_sq(&SamplingScheme::uniform(1), problem)
}

/// Oracle complexity of reaching `epsilon` with a `b`-nice minibatch, up
/// to the common logarithmic factor.
pub fn batch_complexity(b: usize, n: usize, mu: f64, ell: f64, ell_max: f64, sigma_us: f64, epsilon: f64) -> f64 {
    let (bf, nf) = (b as f64, n as f64);
    let iter_smooth = (bf * (ell - ell_max / nf) + ell_max) / mu;
    let iter_noise = (nf - bf) * sigma_us / (nf * mu * mu * epsilon);
    iter_smooth.max(iter_noise)
}

/// Batch size minimizing the minibatch oracle complexity.
pub fn optimal_batchsize(problem: &ProblemInstance, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be > 0"));
    }
    let c = problem.constants()?;
    if !(c.mu > 0.0) {
        return Err(invalid("mu", "must be > 0"));
    }
    let sigma = sigma_us_sq(problem)?;
    Ok(optimal_batchsize_from(problem.n(), c.mu, c.ell, c.ell_max, sigma, epsilon))
}

pub fn optimal_batchsize_from(n: usize, mu: f64, ell: f64, ell_max: f64, sigma_us: f64, epsilon: f64) -> usize {
    let me = mu * epsilon;
    if ell_max >= sigma_us / me {
        return 1;
    }
    let nf = n as f64;
    let b = (nf * (sigma_us - me * ell_max) / (sigma_us + me * (nf * ell - ell_max))).floor();
    (b.max(1.0) as usize).min(n)
}
