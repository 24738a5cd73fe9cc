//! Experiment runner for `unisgda`: config files, built-in recipes, sweeps
//! over methods and seeds, and the checks behind the `verify` subcommand.

pub mod checks;
pub mod config;
pub mod recipes;
pub mod runner;

use std::path::Path;

use anyhow::{bail, Context, Result};

use unisgda_core::problem::read_problem;
use unisgda_core::solver::{restricted_gap, GapResult, GapSettings};
use unisgda_core::Vector;

pub use config::{ExperimentConfig, MethodSpec, ProblemSpec, StartSpec, StepRule};
pub use recipes::{builtin_recipe, RECIPES};
pub use runner::{run_experiment, ExperimentSummary, Iterates, Manifest};

/// Which iterate of a saved `*.iterates.json` file to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WhichIterate {
    Final,
    Averaged,
}

/// Restricted gap of a saved iterate. The box is centered at the stored
/// `x*` with radius `radius`, or `2 ||z - x*||_inf` when absent.
pub fn gap_of_saved(problem_path: &Path, iterates_path: &Path, which: WhichIterate, radius: Option<f64>, budget: usize) -> Result<(GapResult, f64)> {
    let problem = read_problem(problem_path).with_context(|| format!("reading {}", problem_path.display()))?;
    let text = std::fs::read_to_string(iterates_path).with_context(|| format!("reading {}", iterates_path.display()))?;
    let it: Iterates = serde_json::from_str(&text).with_context(|| format!("parsing {}", iterates_path.display()))?;
    let z = match which {
        WhichIterate::Final => it.final_x,
        WhichIterate::Averaged => it.averaged_x.context("the file has no averaged iterate")?,
    };
    if z.len() != problem.dim() {
        bail!("iterate has {} entries, problem dimension is {}", z.len(), problem.dim());
    }
    let z = Vector::from_vec(z);
    let settings = GapSettings { radius, ..GapSettings::default() };
    let set = settings.resolve(&problem, &z)?;
    let r = restricted_gap(&problem, &set, &z, settings.tol, budget)?;
    Ok((r, set.radius))
}
