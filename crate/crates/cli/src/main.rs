use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use unisgda_cli::checks::{verify_experiment, VerifyOptions};
use unisgda_cli::{builtin_recipe, gap_of_saved, run_experiment, ExperimentConfig, ProblemSpec, WhichIterate};
use unisgda_core::problem::write_problem;
use unisgda_core::{GeneratorConfig, Regularizer};

/// Stochastic gradient descent-ascent experiments on quadratic games.
#[derive(Parser)]
#[command(name = "unisgda", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem, solve for x*, write it to a file.
    Gen(GenArgs),
    /// Run an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run (or print) a built-in experiment.
    Recipe {
        /// us_vs_is, vr_compare, distributed_compare or qsgda_vs_diana_fullbatch.
        name: String,
        /// Print the config instead of running it.
        #[arg(long)]
        print: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check the assumptions behind every method of a config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Sampled points per key-assumption check.
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the reports to this file as a JSON array.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Restricted gap of a saved iterate.
    Gap {
        #[arg(long)]
        problem: PathBuf,
        /// A `*.iterates.json` file written by `run`.
        #[arg(long)]
        iterate: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Averaged)]
        which: Which,
        /// Box radius around x*; default twice the max-norm distance.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Final,
    Averaged,
}

#[derive(Args)]
struct GenArgs {
    /// A problem block (same layout as in experiment configs).
    #[arg(long, conflicts_with_all = ["n", "d"])]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    mu_min: f64,
    /// L1 weight; enables the L1 + box regularizer.
    #[arg(long)]
    lambda: Option<f64>,
    /// Box radius for the regularizer (default unbounded).
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds as `0,1,2` or `0..5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
enum Failure {
    Config(anyhow::Error),
    Check(usize),
    Diverged(usize),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {s}");
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|t| t.trim().parse::<u64>().with_context(|| format!("bad seed {t:?}"))).collect()
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s).context("--seeds")?;
        }
        if let Some(r) = self.record_every {
            cfg.record_every = r;
        }
        cfg.validate()
    }
}

fn execute(cfg: &ExperimentConfig, base: &Path, threads: Option<usize>) -> Result<(), Failure> {
    let summary = run_experiment(cfg, base, threads)?;
    println!("{}", summary.dir.join("manifest.json").display());
    for r in &summary.manifest.runs {
        let rel = r.final_relative_dist_sq.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        println!("{:<24} seed {:<4} k {:<8} calls {:<10} rel dist {rel}", r.label, r.seed, r.iterations, r.oracle_calls);
    }
    match summary.diverged() {
        0 => Ok(()),
        n => Err(Failure::Diverged(n)),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Command::Gen(a) => {
            let spec = match (&a.config, a.n, a.d) {
                (Some(path), _, _) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<ProblemSpec>(&text).context("problem block parse error")?
                }
                (None, Some(n), Some(d)) => {
                    let mut spec = ProblemSpec::generated(GeneratorConfig::new(n, d, a.seed, a.mu_min));
                    if a.lambda.is_some() || a.radius.is_some() {
                        spec.regularizer = Some(Regularizer::L1Box {
                            lambda: a.lambda.unwrap_or(0.0),
                            radius: a.radius.unwrap_or(f64::INFINITY),
                        });
                    }
                    spec
                }
                _ => return Err(Failure::Config(anyhow::anyhow!("gen needs --config or both --n and --d"))),
            };
            let problem = spec.build(Path::new("."))?;
            write_problem(&problem, &a.out).context("writing the problem")?;
            let c = problem.constants().map_err(anyhow::Error::from)?;
            println!("{}: n = {}, d = {}, mu = {:.6e}, ell = {:.6e}, ell_hat = {:.6e}", a.out.display(), problem.n(), problem.dim(), c.mu, c.ell, c.ell_hat);
            Ok(())
        }
        Command::Run { config, overrides } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            overrides.apply(&mut cfg)?;
            let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
            execute(&cfg, &base, overrides.threads)
        }
        Command::Recipe { name, print, overrides } => {
            let mut cfg = builtin_recipe(&name)?;
            overrides.apply(&mut cfg)?;
            if print {
                emit(&cfg.to_json());
                return Ok(());
            }
            execute(&cfg, Path::new("."), overrides.threads)
        }
        Command::Verify { config, points, seed, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
            let opts = VerifyOptions { points, seed, ..VerifyOptions::default() };
            let reports = verify_experiment(&cfg, &base, &opts)?;
            for r in &reports {
                emit(&serde_json::to_string(r).context("serializing a report")?);
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&reports).context("serializing reports")? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            eprintln!("{} checks, {failed} failed", reports.len());
            if failed > 0 {
                return Err(Failure::Check(failed));
            }
            Ok(())
        }
        Command::Gap { problem, iterate, which, radius, budget } => {
            let which = match which {
                Which::Final => WhichIterate::Final,
                Which::Averaged => WhichIterate::Averaged,
            };
            let (r, radius) = gap_of_saved(&problem, &iterate, which, radius, budget)?;
            println!(
                "{}",
                serde_json::json!({ "gap": r.value, "approximate": r.approximate, "iterations": r.iterations, "radius": radius })
            );
            Ok(())
        }
    }
}

/// Prints a line, treating a closed stdout (e.g. `| head`) as success.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Check(n)) => {
            eprintln!("{n} checks failed");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(n)) => {
            eprintln!("{n} runs diverged");
            ExitCode::from(3)
        }
    }
}
