//! Experiment configuration files.
//!
//! A config is a JSON document. Parse errors carry line and column from
//! `serde_json`, semantic errors name the offending key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use unisgda_core::problem::{generate_quadratic_game, read_problem, scale_component};
use unisgda_core::solver::GapSettings;
use unisgda_core::{
    method_theory_params, DistributedConfig, EstimatorKind, GeneratorConfig, Method, ProblemInstance, Regularizer,
    SeededRng, StepSchedule, Vector,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Step multipliers tried by a grid search around the theory step.
pub const GRID_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub x0: StartSpec,
    /// Iteration cap per run.
    pub iterations: usize,
    /// Optional oracle-call budget; runs stop once it is spent.
    #[serde(default)]
    pub max_oracle_calls: Option<u64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub methods: Vec<MethodSpec>,
    /// Evaluate the restricted gap of the averaged iterate on every row.
    #[serde(default)]
    pub gap: Option<GapSettings>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_record_every() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_reference_tol() -> f64 {
    1e-12
}

/// Where the operator comes from and how it is modified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub generate: Option<GeneratorConfig>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Overrides the regularizer stored in `file`; defaults to none for
    /// generated problems.
    #[serde(default)]
    pub regularizer: Option<Regularizer>,
    #[serde(default)]
    pub scale_component: Option<ScaleSpec>,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
}

impl ProblemSpec {
    pub fn generated(cfg: GeneratorConfig) -> Self {
        Self { generate: Some(cfg), file: None, regularizer: None, scale_component: None, reference_tol: default_reference_tol() }
    }

    /// Builds the instance and solves for `x*`. Relative file paths are
    /// taken from `base`.
    pub fn build(&self, base: &Path) -> Result<ProblemInstance> {
        let mut problem = match (&self.generate, &self.file) {
            (Some(g), None) => {
                let op = generate_quadratic_game(g).context("problem.generate")?;
                let mut p = ProblemInstance::new(op, Regularizer::None)?;
                p.set_generator(Some(g.clone()));
                p
            }
            (None, Some(f)) => {
                let path = if f.is_relative() { base.join(f) } else { f.clone() };
                read_problem(&path).with_context(|| format!("problem.file: {}", path.display()))?
            }
            _ => bail!("problem: exactly one of `generate` and `file` must be given"),
        };
        let needs_rebuild = self.regularizer.is_some() || self.scale_component.is_some();
        if needs_rebuild {
            let reg = self.regularizer.unwrap_or(*problem.regularizer());
            let mut op = problem.operator().clone();
            if let Some(s) = &self.scale_component {
                op = scale_component(&op, s.index, s.factor).context("problem.scale_component")?;
            }
            let generator = problem.generator().cloned();
            problem = ProblemInstance::new(op, reg).context("problem.regularizer")?;
            problem.set_generator(generator);
        }
        if problem.reference().map_or(true, |r| r.tol > self.reference_tol) || needs_rebuild {
            problem.solve_reference(self.reference_tol).context("solving for the reference solution")?;
        }
        Ok(problem)
    }
}

/// Multiplies component `index` (matrix and offset) by `factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub index: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    #[default]
    Zeros,
    Constant {
        value: f64,
    },
    Gaussian {
        scale: f64,
        seed: u64,
    },
    Values {
        values: Vec<f64>,
    },
}

impl StartSpec {
    pub fn build(&self, d: usize) -> Result<Vector> {
        Ok(match self {
            StartSpec::Zeros => Vector::zeros(d),
            StartSpec::Constant { value } => Vector::from_element(d, *value),
            StartSpec::Gaussian { scale, seed } => SeededRng::new(*seed).gaussian_vector(d, *scale),
            StartSpec::Values { values } => {
                if values.len() != d {
                    bail!("x0.values: {} entries for dimension {d}", values.len());
                }
                Vector::from_column_slice(values)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// File-name stem; defaults to the method name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub estimator: Option<EstimatorKind>,
    #[serde(default)]
    pub distributed: Option<DistributedConfig>,
    #[serde(default)]
    pub step: StepRule,
    /// Expand into one run per factor in [`GRID_FACTORS`] times the step.
    #[serde(default)]
    pub grid: bool,
}

impl MethodSpec {
    pub fn estimator(kind: EstimatorKind, step: StepRule) -> Self {
        Self { label: None, estimator: Some(kind), distributed: None, step, grid: false }
    }

    pub fn distributed(cfg: DistributedConfig, step: StepRule) -> Self {
        Self { label: None, estimator: None, distributed: Some(cfg), step, grid: false }
    }

    pub fn labeled(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn method(&self) -> Result<Method> {
        match (&self.estimator, &self.distributed) {
            (Some(k), None) => Ok(Method::Single(k.clone())),
            (None, Some(c)) => Ok(Method::Distributed(c.clone())),
            _ => bail!("method {:?}: exactly one of `estimator` and `distributed` must be given", self.label),
        }
    }

    pub fn label(&self) -> Result<String> {
        Ok(match &self.label {
            Some(l) => l.clone(),
            None => self.method()?.name().to_string(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    /// Constant step `min{1/mu, 1/(2(A + 2BC/rho))}` times `scale`.
    Theory {
        #[serde(default = "unit")]
        scale: f64,
    },
    /// Constant `1/h` for half the horizon, then decreasing.
    TheoryDecreasing,
    Constant {
        gamma: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Theory { scale: 1.0 }
    }
}

/// One `(method, step)` pair after grid expansion.
#[derive(Clone, Debug)]
pub struct ResolvedMethod {
    pub label: String,
    pub method: Method,
    pub schedule: StepSchedule,
}

impl StepRule {
    fn schedule(&self, problem: &ProblemInstance, method: &Method, x0: &Vector, horizon: usize, factor: f64) -> Result<StepSchedule> {
        let mu = problem.constants()?.mu;
        let tp = || method_theory_params(problem, method, x0).with_context(|| format!("theory parameters of {}", method.name()));
        let schedule = match *self {
            StepRule::Theory { scale } => StepSchedule::Constant { gamma: tp()?.theory_stepsize(mu) * scale * factor },
            StepRule::TheoryDecreasing => {
                StepSchedule::StichDecreasing { h: tp()?.decreasing_ceiling(mu) / factor, a: mu, horizon }
            }
            StepRule::Constant { gamma } => StepSchedule::Constant { gamma: gamma * factor },
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl ExperimentConfig {
    /// Reads and checks a config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("config parse error")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version: expected {SCHEMA_VERSION}, got {}", self.schema_version);
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("name: must be a non-empty file-name component");
        }
        if self.methods.is_empty() {
            bail!("no methods");
        }
        if self.seeds.is_empty() {
            bail!("seeds: need at least one seed");
        }
        if self.record_every == 0 {
            bail!("record_every: must be >= 1");
        }
        let mut labels = std::collections::BTreeSet::new();
        for m in &self.methods {
            m.method()?;
            let l = m.label()?;
            if l.is_empty() || l.contains(['/', '\\']) {
                bail!("method label {l:?}: must be a non-empty file-name component");
            }
            if !labels.insert(l.clone()) {
                bail!("method label {l:?} appears twice; set `label` to tell them apart");
            }
        }
        Ok(())
    }

    /// Expands grids and computes every schedule.
    pub fn resolve_methods(&self, problem: &ProblemInstance, x0: &Vector) -> Result<Vec<ResolvedMethod>> {
        let mut out = Vec::new();
        for spec in &self.methods {
            let method = match spec.method()? {
                Method::Single(k) => Method::Single(k.resolve(problem)?),
                m => m,
            };
            let label = spec.label()?;
            let factors: &[f64] = if spec.grid { &GRID_FACTORS } else { &[1.0] };
            for &f in factors {
                let schedule = spec.step.schedule(problem, &method, x0, self.iterations, f).with_context(|| format!("method {label}"))?;
                let label = if spec.grid { format!("{label}_x{f}") } else { label.clone() };
                out.push(ResolvedMethod { label, method: method.clone(), schedule });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "schema_version": 1,
            "name": "t",
            "problem": {"generate": {"n": 4, "d": 2, "seed": 1, "mu_min": 0.5}},
            "iterations": 10,
            "methods": [{"estimator": {"kind": "full_batch"}}]
        }"#
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_json(minimal()).unwrap();
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.record_every, 1);
        assert_eq!(c.x0, StartSpec::Zeros);
        assert_eq!(c.methods[0].step, StepRule::Theory { scale: 1.0 });
    }

    #[test]
    fn unknown_key_is_reported_with_position() {
        let text = minimal().replace("\"iterations\"", "\"iteration\"");
        let err = format!("{:#}", ExperimentConfig::from_json(&text).unwrap_err());
        assert!(err.contains("iteration"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let text = minimal().replace(r#"[{"estimator": {"kind": "full_batch"}}]"#, "[]");
        let err = format!("{:#}", ExperimentConfig::from_json(&text).unwrap_err());
        assert!(err.contains("no methods"), "{err}");
    }

    #[test]
    fn grid_expands_around_the_theory_step() {
        let mut c = ExperimentConfig::from_json(minimal()).unwrap();
        c.methods[0].grid = true;
        let p = c.problem.build(Path::new(".")).unwrap();
        let r = c.resolve_methods(&p, &Vector::zeros(2)).unwrap();
        assert_eq!(r.len(), 5);
        let g: Vec<f64> = r
            .iter()
            .map(|m| match m.schedule {
                StepSchedule::Constant { gamma } => gamma,
                _ => unreachable!(),
            })
            .collect();
        assert!((g[4] / g[2] - 4.0).abs() < 1e-12);
        assert_eq!(r[0].label, "full_batch_x0.25");
    }
}
