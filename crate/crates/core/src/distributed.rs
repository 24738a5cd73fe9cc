//! Simulated parameter-server estimators with compressed uplink.
//!
//! Workers own contiguous shards of the components. Each round every worker
//! forms a local estimate `g_i`, compresses a message derived from it, and
//! the server averages the messages with weights `m_i / N`. Everything runs
//! in one process in a fixed worker order, so a seed fixes the whole run.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compression::{encoded_bits, validate_value_bits, Quantizer};
use crate::error::{invalid, Result};
use crate::estimators::{GradientEstimator, GradientSample, TheoryParams};
use crate::linalg::check_dim;
use crate::problem::{averaged_cocoercivity, FiniteSumOperator, ProblemInstance};
use crate::random::{Randomness, SeededRng};
use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributedMethod {
    /// Average of compressed local estimates.
    Qsgda,
    /// Compressed differences to learned shifts. `alpha` defaults to `1/(1+omega)`.
    Diana {
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// DIANA with loopless-SVRG local estimates. `p` defaults to `1/m`,
    /// `alpha` to `min{p/3, 1/(1+omega)}`.
    VrDiana {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        p: Option<f64>,
        /// One restart coin for all workers instead of one each.
        #[serde(default)]
        shared_coin: bool,
    },
}

impl DistributedMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DistributedMethod::Qsgda => "qsgda",
            DistributedMethod::Diana { .. } => "diana",
            DistributedMethod::VrDiana { .. } => "vr_diana",
        }
    }
}

/// Per-worker noise level, one value for all workers or one per worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevels {
    All(f64),
    PerWorker(Vec<f64>),
}

impl Default for NoiseLevels {
    fn default() -> Self {
        NoiseLevels::All(0.0)
    }
}

impl NoiseLevels {
    fn expand(&self, n_workers: usize) -> Result<Vec<f64>> {
        let v = match self {
            NoiseLevels::All(s) => vec![*s; n_workers],
            NoiseLevels::PerWorker(v) if v.len() == n_workers => v.clone(),
            NoiseLevels::PerWorker(v) => {
                return Err(invalid("sigma", format!("{} values for {n_workers} workers", v.len())))
            }
        };
        if v.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(invalid("sigma", "noise levels must be finite and >= 0"));
        }
        Ok(v)
    }
}

fn default_value_bits() -> u32 {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributedConfig {
    pub method: DistributedMethod,
    pub n_workers: usize,
    pub quantizer: Quantizer,
    #[serde(default)]
    pub sigma: NoiseLevels,
    #[serde(default = "default_value_bits")]
    pub value_bits: u32,
}

impl DistributedConfig {
    pub fn new(method: DistributedMethod, n_workers: usize, quantizer: Quantizer) -> Self {
        Self { method, n_workers, quantizer, sigma: NoiseLevels::default(), value_bits: 64 }
    }
}

/// One worker's data.
#[derive(Clone, Debug)]
pub struct WorkerShard {
    pub local: FiniteSumOperator,
    pub noise_sigma: f64,
    /// Index of the first global component in this shard.
    pub first: usize,
}

impl WorkerShard {
    pub fn m(&self) -> usize {
        self.local.n()
    }
}

/// Contiguous split, remainder to the last worker.
pub fn partition(op: &FiniteSumOperator, n_workers: usize) -> Result<Vec<WorkerShard>> {
    let n = op.n();
    if n_workers == 0 || n_workers > n {
        return Err(invalid("n_workers", format!("{n_workers} workers for {n} components")));
    }
    let base = n / n_workers;
    (0..n_workers)
        .map(|w| {
            let start = w * base;
            let end = if w + 1 == n_workers { n } else { start + base };
            Ok(WorkerShard { local: op.slice(start..end)?, noise_sigma: 0.0, first: start })
        })
        .collect()
}

/// `(1/n_workers) sum_i ||F_i(x*)||^2` over worker-local means.
pub fn zeta_star_sq(shards: &[WorkerShard], x_star: &Vector) -> Result<f64> {
    let mut s = 0.0;
    for sh in shards {
        s += sh.local.eval_full(x_star)?.norm_squared();
    }
    Ok(s / shards.len() as f64)
}

/// Loopless anchor `w` and the local operator value `F_i(w)`.
type Anchor = (Vector, Vector);

#[derive(Clone, Debug)]
struct WorkerState {
    h: Vector,
    anchor: Option<Anchor>,
}

/// Cumulative communication and computation counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub rounds: u64,
    pub uplink_bits: u64,
    pub oracle_calls: u64,
}

#[derive(Clone, Debug)]
pub struct DistributedEstimator {
    cfg: DistributedConfig,
    shards: Arc<Vec<WorkerShard>>,
    weights: Vec<f64>,
    alpha: f64,
    p: f64,
    workers: Vec<WorkerState>,
    server_h: Vector,
    init_calls: u64,
    ledger: CommLedger,
}

impl DistributedEstimator {
    pub fn new(cfg: DistributedConfig, op: &FiniteSumOperator, x0: &Vector) -> Result<Self> {
        check_dim(op.dim(), x0.len())?;
        let d = op.dim();
        cfg.quantizer.validate(d)?;
        validate_value_bits(cfg.value_bits)?;
        let mut shards = partition(op, cfg.n_workers)?;
        for (s, sigma) in shards.iter_mut().zip(cfg.sigma.expand(cfg.n_workers)?) {
            s.noise_sigma = sigma;
        }
        let total = op.n() as f64;
        let weights: Vec<f64> = shards.iter().map(|s| s.m() as f64 / total).collect();
        let omega = cfg.quantizer.omega(d);
        let (alpha, p) = match cfg.method {
            DistributedMethod::Qsgda => (0.0, 0.0),
            DistributedMethod::Diana { alpha } => {
                let a = alpha.unwrap_or(1.0 / (1.0 + omega));
                if !(a > 0.0 && a <= 1.0 / (1.0 + omega) * (1.0 + 1e-12)) {
                    return Err(invalid("alpha", format!("{a} not in (0, 1/(1+omega)] with omega = {omega}")));
                }
                (a, 0.0)
            }
            DistributedMethod::VrDiana { alpha, p, .. } => {
                if shards.iter().any(|s| s.noise_sigma > 0.0) {
                    return Err(invalid("sigma", "noisy locals cannot be combined with loopless subsampling"));
                }
                let m_min = shards.iter().map(|s| s.m()).min().expect("nonempty");
                let p = p.unwrap_or(1.0 / m_min as f64);
                if !(p > 0.0 && p <= 1.0) {
                    return Err(invalid("p", format!("{p} not in (0, 1]")));
                }
                let cap = (p / 3.0).min(1.0 / (1.0 + omega));
                let a = alpha.unwrap_or(cap);
                if !(a > 0.0 && a <= cap * (1.0 + 1e-12)) {
                    return Err(invalid("alpha", format!("{a} not in (0, min(p/3, 1/(1+omega))] = (0, {cap}]")));
                }
                (a, p)
            }
        };
        let mut init_calls = 0;
        let workers = shards
            .iter()
            .map(|s| {
                let anchor = if matches!(cfg.method, DistributedMethod::VrDiana { .. }) {
                    init_calls += s.m() as u64;
                    Some((x0.clone(), s.local.eval_full(x0)?))
                } else {
                    None
                };
                Ok(WorkerState { h: Vector::zeros(d), anchor })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            shards: Arc::new(shards),
            weights,
            alpha,
            p,
            workers,
            server_h: Vector::zeros(d),
            init_calls,
            ledger: CommLedger { oracle_calls: init_calls, ..Default::default() },
        })
    }

    pub fn config(&self) -> &DistributedConfig {
        &self.cfg
    }

    pub fn shards(&self) -> &[WorkerShard] {
        &self.shards
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn ledger(&self) -> CommLedger {
        self.ledger
    }

    pub fn shifts(&self) -> Vec<&Vector> {
        self.workers.iter().map(|w| &w.h).collect()
    }

    pub fn server_shift(&self) -> &Vector {
        &self.server_h
    }

    /// Overwrites the worker shifts and resynchronizes the server.
    pub fn set_shifts(&mut self, hs: Vec<Vector>) -> Result<()> {
        if hs.len() != self.workers.len() {
            return Err(invalid("shifts", "one shift per worker"));
        }
        let d = self.server_h.len();
        let mut server = Vector::zeros(d);
        for ((w, h), pi) in self.workers.iter_mut().zip(hs).zip(&self.weights) {
            check_dim(d, h.len())?;
            server.axpy(*pi, &h, 1.0);
            w.h = h;
        }
        self.server_h = server;
        Ok(())
    }

    /// Local estimate, its oracle cost, and the new `(w, F_i(w))` anchor on a restart.
    fn local_estimate(&self, i: usize, x: &Vector, coin: Option<bool>, rng: &mut dyn Randomness) -> Result<(Vector, u64, Option<Anchor>)> {
        let shard = &self.shards[i];
        let m = shard.m() as u64;
        match &self.workers[i].anchor {
            None => {
                let mut g = shard.local.eval_full(x)?;
                if shard.noise_sigma > 0.0 {
                    let s = shard.noise_sigma / (x.len() as f64).sqrt();
                    for v in g.iter_mut() {
                        *v += s * rng.normal();
                    }
                }
                Ok((g, m, None))
            }
            Some((w, fw)) => {
                let j = rng.index(shard.m());
                let mut g = fw.clone();
                g.gemv(1.0, &shard.local.components()[j].matrix, &(x - w), 1.0);
                let mut calls = 2;
                let restart = match coin {
                    Some(c) => c,
                    None => rng.bernoulli(self.p),
                };
                let new_anchor = if restart {
                    calls += m;
                    Some((x.clone(), shard.local.eval_full(x)?))
                } else {
                    None
                };
                Ok((g, calls, new_anchor))
            }
        }
    }

    /// One synchronous round.
    pub fn aggregate_round(&mut self, x: &Vector, rng: &mut dyn Randomness) -> Result<GradientSample> {
        check_dim(self.server_h.len(), x.len())?;
        let d = x.len();
        let shared = match self.cfg.method {
            DistributedMethod::VrDiana { shared_coin: true, .. } => Some(rng.bernoulli(self.p)),
            _ => None,
        };
        let mut mean_q = Vector::zeros(d);
        let mut bits = 0u64;
        let mut calls = 0u64;
        for i in 0..self.workers.len() {
            let (gi, c, new_anchor) = self.local_estimate(i, x, shared, rng)?;
            calls += c;
            let msg = match self.cfg.method {
                DistributedMethod::Qsgda => gi,
                _ => gi - &self.workers[i].h,
            };
            let q = self.cfg.quantizer.compress(&msg, rng)?;
            bits += encoded_bits(&q, self.cfg.value_bits);
            q.add_scaled_to(&mut mean_q, self.weights[i])?;
            if !matches!(self.cfg.method, DistributedMethod::Qsgda) {
                q.add_scaled_to(&mut self.workers[i].h, self.alpha)?;
            }
            if let Some(a) = new_anchor {
                self.workers[i].anchor = Some(a);
            }
        }
        let g = match self.cfg.method {
            DistributedMethod::Qsgda => mean_q,
            _ => {
                let g = &self.server_h + &mean_q;
                self.server_h.axpy(self.alpha, &mean_q, 1.0);
                g
            }
        };
        self.ledger.rounds += 1;
        self.ledger.uplink_bits += bits;
        self.ledger.oracle_calls += calls;
        Ok(GradientSample { g, oracle_calls: calls, uplink_bits: bits })
    }

    fn worker_level_ell_hat(&self, problem: &ProblemInstance) -> Result<f64> {
        let mats: Vec<_> = self.shards.iter().map(|s| s.local.mean_matrix().clone()).collect();
        averaged_cocoercivity(mats.iter(), problem.operator().mean_matrix())
    }

    fn component_level_ell_tilde(&self, problem: &ProblemInstance) -> Result<f64> {
        averaged_cocoercivity(
            self.shards.iter().flat_map(|s| s.local.components().iter().map(|c| &c.matrix)),
            problem.operator().mean_matrix(),
        )
    }
}

impl GradientEstimator for DistributedEstimator {
    fn dim(&self) -> usize {
        self.server_h.len()
    }

    fn init_calls(&self) -> u64 {
        self.init_calls
    }

    fn sample(&mut self, x: &Vector, rng: &mut dyn Randomness) -> Result<GradientSample> {
        self.aggregate_round(x, rng)
    }

    fn sigma_sq(&self, x_star: &Vector) -> Result<f64> {
        if matches!(self.cfg.method, DistributedMethod::Qsgda) {
            return Ok(0.0);
        }
        let total: usize = self.shards.iter().map(|s| s.m()).sum();
        let mut shift_part = 0.0;
        let mut anchor_part = 0.0;
        for ((s, w), pi) in self.shards.iter().zip(&self.workers).zip(&self.weights) {
            shift_part += pi * (&w.h - s.local.eval_full(x_star)?).norm_squared();
            if let Some((anchor, _)) = &w.anchor {
                let diff = anchor - x_star;
                anchor_part += s.local.components().iter().map(|c| (&c.matrix * &diff).norm_squared()).sum::<f64>();
            }
        }
        Ok(shift_part + anchor_part / total as f64)
    }

    fn scramble(&mut self, x_star: &Vector, scale: f64, rng: &mut SeededRng) -> Result<()> {
        let d = x_star.len();
        let mut hs = Vec::with_capacity(self.workers.len());
        for (s, w) in self.shards.iter().zip(self.workers.iter_mut()) {
            hs.push(s.local.eval_full(x_star)? + rng.gaussian_vector(d, scale));
            if w.anchor.is_some() {
                let a = x_star + rng.gaussian_vector(d, scale);
                let fa = s.local.eval_full(&a)?;
                w.anchor = Some((a, fa));
            }
        }
        if matches!(self.cfg.method, DistributedMethod::Qsgda) {
            return Ok(());
        }
        self.set_shifts(hs)
    }

    /// Requires equal shard sizes, as the sextuples are stated for them.
    fn theory_params(&self, problem: &ProblemInstance) -> Result<TheoryParams> {
        let m0 = self.shards[0].m();
        if self.shards.iter().any(|s| s.m() != m0) {
            return Err(invalid("n_workers", "theory parameters need equally sized shards"));
        }
        let c = problem.constants()?;
        let n = self.shards.len() as f64;
        let omega = self.cfg.quantizer.omega(problem.dim());
        let sigma2 = self.shards.iter().map(|s| s.noise_sigma * s.noise_sigma).sum::<f64>() / n;
        let ell_hat = self.worker_level_ell_hat(problem)?;
        let (alpha, p) = (self.alpha, self.p);
        Ok(match self.cfg.method {
            DistributedMethod::Qsgda => {
                let zeta = zeta_star_sq(&self.shards, problem.x_star()?)?;
                TheoryParams::new(
                    1.5 * c.ell + 9.0 * omega * ell_hat / (2.0 * n),
                    0.0,
                    0.0,
                    1.0,
                    (3.0 * (1.0 + 3.0 * omega) * sigma2 + 9.0 * omega * zeta) / n,
                    0.0,
                )
            }
            DistributedMethod::Diana { .. } => TheoryParams::new(
                (0.5 + omega / n) * ell_hat,
                2.0 * omega / n,
                alpha * ell_hat / 2.0,
                alpha,
                (1.0 + omega) * sigma2 / n,
                alpha * sigma2,
            ),
            DistributedMethod::VrDiana { .. } => {
                let ell_tilde = self.component_level_ell_tilde(problem)?;
                TheoryParams::new(
                    c.ell / 2.0 + ell_tilde / n + omega * (ell_hat + ell_tilde) / n,
                    2.0 * (omega + 1.0) / n,
                    p * ell_tilde / 2.0 + alpha * (ell_tilde + ell_hat),
                    alpha,
                    0.0,
                    0.0,
                )
            }
        })
    }

    fn state_consistency(&self) -> f64 {
        let mut mean = Vector::zeros(self.server_h.len());
        for (w, pi) in self.workers.iter().zip(&self.weights) {
            mean.axpy(*pi, &w.h, 1.0);
        }
        (mean - &self.server_h).amax()
    }
}
