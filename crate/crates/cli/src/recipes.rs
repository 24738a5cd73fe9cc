//! Built-in desk-scale experiments (n = 100, d = 20).

use std::path::PathBuf;

use anyhow::{bail, Result};

use unisgda_core::{
    DistributedConfig, DistributedMethod, EstimatorKind, GeneratorConfig, Quantizer, SamplingScheme,
};

use crate::config::{ExperimentConfig, MethodSpec, ProblemSpec, ScaleSpec, StartSpec, StepRule, SCHEMA_VERSION};

pub const RECIPES: [&str; 4] = ["us_vs_is", "vr_compare", "distributed_compare", "qsgda_vs_diana_fullbatch"];

const N: usize = 100;
const D: usize = 20;
const WORKERS: usize = 10;

fn base(name: &str, problem: ProblemSpec, iterations: usize, methods: Vec<MethodSpec>) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        problem,
        x0: StartSpec::Zeros,
        iterations,
        max_oracle_calls: None,
        seeds: (0..5).collect(),
        record_every: 10,
        methods,
        gap: None,
        output_dir: PathBuf::from("runs"),
    }
}

fn theory() -> StepRule {
    StepRule::Theory { scale: 1.0 }
}

pub fn builtin_recipe(name: &str) -> Result<ExperimentConfig> {
    let game = GeneratorConfig::new(N, D, 0, 1.0);
    Ok(match name {
        // One component scaled by 100 makes max ell_i far larger than the
        // mean. Neither method reduces variance, so both use the
        // decreasing schedule derived from their own constants.
        "us_vs_is" => {
            let mut problem = ProblemSpec::generated(game);
            problem.scale_component = Some(ScaleSpec { index: 0, factor: 100.0 });
            let mut cfg = base(
                name,
                problem,
                200 * N,
                vec![
                    MethodSpec::estimator(EstimatorKind::SgdaAs { scheme: SamplingScheme::uniform(1) }, StepRule::TheoryDecreasing)
                        .labeled("us"),
                    MethodSpec::estimator(
                        EstimatorKind::SgdaAs { scheme: SamplingScheme::Importance { weights: Vec::new(), b: 1 } },
                        StepRule::TheoryDecreasing,
                    )
                    .labeled("is"),
                ],
            );
            cfg.seeds = (0..20).collect();
            cfg.record_every = 20;
            cfg
        }
        "vr_compare" => {
            let mut cfg = base(
                name,
                ProblemSpec::generated(game),
                10_000_000,
                vec![
                    MethodSpec::estimator(EstimatorKind::FullBatch, theory()),
                    MethodSpec::estimator(EstimatorKind::SgdaAs { scheme: SamplingScheme::uniform(1) }, theory()),
                    MethodSpec::estimator(EstimatorKind::Lsvrgda { p: 1.0 / N as f64 }, theory()),
                    MethodSpec::estimator(EstimatorKind::SagaSgda, theory()),
                    MethodSpec::estimator(EstimatorKind::SegaSgda, theory()),
                ],
            );
            cfg.max_oracle_calls = Some(200 * N as u64);
            cfg
        }
        "distributed_compare" => {
            let q = Quantizer::RandK { k: 5 };
            base(
                name,
                ProblemSpec::generated(game),
                5000,
                vec![
                    MethodSpec::distributed(DistributedConfig::new(DistributedMethod::Qsgda, WORKERS, q), theory()),
                    MethodSpec::distributed(DistributedConfig::new(DistributedMethod::Diana { alpha: None }, WORKERS, q), theory()),
                    MethodSpec::distributed(
                        DistributedConfig::new(DistributedMethod::VrDiana { alpha: None, p: None, shared_coin: false }, WORKERS, q),
                        theory(),
                    ),
                    MethodSpec::distributed(
                        DistributedConfig::new(DistributedMethod::Diana { alpha: None }, WORKERS, Quantizer::Identity),
                        theory(),
                    )
                    .labeled("uncompressed"),
                ],
            )
        }
        // Exact local operators, so the only noise left is compression of
        // heterogeneous worker outputs.
        "qsgda_vs_diana_fullbatch" => {
            let q = Quantizer::RandK { k: 5 };
            base(
                name,
                ProblemSpec::generated(game),
                5000,
                vec![
                    MethodSpec::distributed(DistributedConfig::new(DistributedMethod::Qsgda, WORKERS, q), theory()),
                    MethodSpec::distributed(DistributedConfig::new(DistributedMethod::Diana { alpha: None }, WORKERS, q), theory()),
                ],
            )
        }
        other => bail!("unknown recipe {other:?}; known recipes: {}", RECIPES.join(", ")),
    })
}
