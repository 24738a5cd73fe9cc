//! Runs every `(method, seed)` cell of an experiment and persists results.
//!
//! Output layout under `{output_dir}/{name}/`:
//! - `manifest.json`: config, its hash, problem constants, `x*`, run list
//! - `problem.json`: the instance in the portable problem format
//! - `{label}_{seed}.csv`: one trace per cell
//! - `{label}_{seed}.iterates.json`: final and averaged iterates

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use unisgda_core::problem::write_problem;
use unisgda_core::solver::CSV_HEADER;
use unisgda_core::{
    run, GeneratorConfig, Method, ProblemConstants, ProblemInstance, Regularizer, RunConfig, RunStatus, RunTrace,
    StepSchedule, Vector,
};

use crate::config::{ExperimentConfig, ResolvedMethod};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub n: usize,
    pub d: usize,
    pub regularizer: Regularizer,
    pub generator: Option<GeneratorConfig>,
    pub constants: ProblemConstants,
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub method: Method,
    pub schedule: StepSchedule,
    #[serde(flatten)]
    pub status: RunStatus,
    pub iterations: usize,
    pub oracle_calls: u64,
    pub uplink_bits: u64,
    /// `||x_K - x*||^2 / ||x_0 - x*||^2` at the last finite row.
    pub final_relative_dist_sq: Option<f64>,
    pub csv: String,
    pub iterates: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    /// SHA-256 of the canonical config (without `output_dir`) and the code version.
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub csv_header: String,
    pub problem: ProblemSummary,
    pub runs: Vec<RunRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Iterates {
    pub final_x: Vec<f64>,
    pub averaged_x: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl ExperimentSummary {
    pub fn diverged(&self) -> usize {
        self.manifest.runs.iter().filter(|r| matches!(r.status, RunStatus::Diverged { .. })).count()
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output_dir = PathBuf::new();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&canonical).expect("config serializes"));
    h.update(b"\n");
    h.update(CODE_VERSION.as_bytes());
    hex::encode(h.finalize())
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Runs the experiment. Relative problem-file paths are resolved against
/// `base`; `threads = None` uses all cores.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, threads: Option<usize>) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let problem = cfg.problem.build(base)?;
    let x0 = cfg.x0.build(problem.dim())?;
    let methods = cfg.resolve_methods(&problem, &x0)?;
    let constants = problem.constants()?.clone();
    let reference = problem.reference().context("reference solution")?.clone();

    let dir = cfg.output_dir.join(&cfg.name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_problem(&problem, &dir.join("problem.json")).context("writing problem.json")?;

    let cells: Vec<(&ResolvedMethod, u64)> = methods.iter().flat_map(|m| cfg.seeds.iter().map(move |s| (m, *s))).collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("building the thread pool")?;
    let runs = pool.install(|| {
        cells.par_iter().map(|(m, seed)| run_cell(cfg, &problem, &x0, m, *seed, &dir)).collect::<Result<Vec<_>>>()
    })?;

    let manifest = Manifest {
        code_version: CODE_VERSION.to_string(),
        config_sha256: config_hash(cfg),
        config: cfg.clone(),
        csv_header: CSV_HEADER.to_string(),
        problem: ProblemSummary {
            n: problem.n(),
            d: problem.dim(),
            regularizer: *problem.regularizer(),
            generator: problem.generator().cloned(),
            constants,
            x_star: to_vec(&reference.x),
            residual: reference.residual,
            file: "problem.json".into(),
        },
        runs,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(dir.join("manifest.json"), text).context("writing manifest.json")?;
    Ok(ExperimentSummary { dir, manifest })
}

fn run_cell(cfg: &ExperimentConfig, problem: &ProblemInstance, x0: &Vector, m: &ResolvedMethod, seed: u64, dir: &Path) -> Result<RunRecord> {
    let mut rc = RunConfig::new(x0.clone(), m.schedule, cfg.iterations, seed);
    rc.max_oracle_calls = cfg.max_oracle_calls;
    rc.record_every = cfg.record_every;
    rc.gap = cfg.gap.clone();
    let trace = run(problem, &m.method, &rc).with_context(|| format!("{} seed {seed}", m.label))?;
    if let RunStatus::Diverged { iteration } = trace.status {
        log::warn!("{} seed {seed} diverged at iteration {iteration}", m.label);
    }
    let stem = format!("{}_{seed}", m.label);
    let csv = format!("{stem}.csv");
    let iterates = format!("{stem}.iterates.json");
    fs::write(dir.join(&csv), trace.to_csv_string()).with_context(|| format!("writing {csv}"))?;
    let it = Iterates { final_x: to_vec(&trace.final_x), averaged_x: trace.averaged_x.as_ref().map(to_vec) };
    fs::write(dir.join(&iterates), serde_json::to_string(&it)? + "\n").with_context(|| format!("writing {iterates}"))?;
    Ok(record(m, seed, &trace, csv, iterates))
}

fn record(m: &ResolvedMethod, seed: u64, trace: &RunTrace, csv: String, iterates: String) -> RunRecord {
    let last = trace.rows.last().expect("every trace has row 0");
    let d0 = trace.initial_dist_sq();
    let last_finite = trace.rows.iter().rev().find_map(|r| r.dist_sq);
    RunRecord {
        label: m.label.clone(),
        seed,
        method: m.method.clone(),
        schedule: m.schedule,
        status: trace.status,
        iterations: last.k,
        oracle_calls: last.oracle_calls,
        uplink_bits: last.uplink_bits,
        final_relative_dist_sq: match (last_finite, d0) {
            (Some(d), Some(d0)) if d0 > 0.0 => Some(d / d0),
            _ => None,
        },
        csv,
        iterates,
    }
}
