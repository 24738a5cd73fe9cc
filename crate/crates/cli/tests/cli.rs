use std::path::Path;
use std::process::Command;

use unisgda_cli::{builtin_recipe, run_experiment, ExperimentConfig, MethodSpec, StepRule, RECIPES};
use unisgda_core::distributed::NoiseLevels;
use unisgda_core::{DistributedMethod, EstimatorKind, Method};

fn small_config(dir: &Path) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "schema_version": 1,
            "name": "small",
            "problem": {{
                "generate": {{"n": 8, "d": 3, "seed": 4, "mu_min": 0.5}},
                "regularizer": {{"kind": "l1_box", "lambda": 0.1, "radius": 2.0}}
            }},
            "x0": {{"kind": "constant", "value": 1.0}},
            "iterations": 300,
            "seeds": [0, 1],
            "record_every": 10,
            "methods": [
                {{"estimator": {{"kind": "lsvrgda", "p": 0.125}}}},
                {{"estimator": {{"kind": "sgda_as", "scheme": {{"kind": "importance", "b": 2}}}}, "step": {{"rule": "theory_decreasing"}}}},
                {{"distributed": {{"method": {{"kind": "diana"}}, "n_workers": 2, "quantizer": {{"kind": "rand_k", "k": 1}}}}}}
            ],
            "gap": {{}},
            "output_dir": {:?}
        }}"#,
        dir.display().to_string()
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn experiment_writes_traces_and_a_reproducible_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = run_experiment(&cfg, Path::new("."), Some(2)).unwrap();
    assert_eq!(a.manifest.runs.len(), 6);
    assert!(a.manifest.problem.residual <= 1e-10);
    assert!(a.manifest.problem.constants.mu > 0.0);
    for r in &a.manifest.runs {
        let csv = String::from_utf8(read(&a.dir.join(&r.csv))).unwrap();
        assert!(csv.starts_with(unisgda_core::solver::CSV_HEADER));
        assert!(a.dir.join(&r.iterates).exists());
        assert_eq!(r.iterations, 300);
    }
    let first: Vec<(String, Vec<u8>)> =
        a.manifest.runs.iter().map(|r| (r.csv.clone(), read(&a.dir.join(&r.csv)))).collect();
    let manifest = read(&a.dir.join("manifest.json"));

    let b = run_experiment(&cfg, Path::new("."), Some(1)).unwrap();
    assert_eq!(manifest, read(&b.dir.join("manifest.json")));
    for (name, bytes) in first {
        assert_eq!(bytes, read(&b.dir.join(&name)), "{name} changed between runs");
    }
}

#[test]
fn desk_scale_override_of_a_full_scale_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = builtin_recipe("vr_compare").unwrap();
    let g = cfg.problem.generate.as_mut().unwrap();
    g.n = 1000;
    g.d = 100;
    // Desk-scale override.
    g.n = 100;
    g.d = 20;
    cfg.output_dir = tmp.path().to_path_buf();
    cfg.seeds = vec![0];
    cfg.max_oracle_calls = Some(2000);
    cfg.record_every = 50;
    let s = run_experiment(&cfg, Path::new("."), None).unwrap();
    let c = &s.manifest.problem.constants;
    assert!(c.mu > 0.0 && c.ell >= c.mu && c.ell_hat >= c.ell);
    assert!(s.manifest.problem.residual <= 1e-10);
    assert_eq!(s.manifest.runs.len(), 5);
}

#[test]
fn divergent_runs_are_recorded_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.methods = vec![
        MethodSpec::estimator(EstimatorKind::FullBatch, StepRule::Constant { gamma: 1e3 }).labeled("huge"),
        MethodSpec::estimator(EstimatorKind::FullBatch, StepRule::Theory { scale: 1.0 }),
    ];
    cfg.problem.regularizer = Some(unisgda_core::Regularizer::None);
    cfg.gap = None;
    let s = run_experiment(&cfg, Path::new("."), None).unwrap();
    assert_eq!(s.diverged(), 2);
    assert_eq!(s.manifest.runs.len(), 4);
}

#[test]
fn recipes_resolve_and_match_their_descriptions() {
    for name in RECIPES {
        let cfg = builtin_recipe(name).unwrap();
        cfg.validate().unwrap();
        let p = cfg.problem.build(Path::new(".")).unwrap();
        let x0 = cfg.x0.build(p.dim()).unwrap();
        let methods = cfg.resolve_methods(&p, &x0).unwrap();
        assert!(!methods.is_empty());
        assert_eq!((p.n(), p.dim()), (100, 20), "{name}");
        match name {
            "us_vs_is" => {
                let c = p.constants().unwrap();
                assert!(c.ell_max / c.ell_bar >= 20.0, "ratio {}", c.ell_max / c.ell_bar);
            }
            "qsgda_vs_diana_fullbatch" | "distributed_compare" => {
                for m in &methods {
                    let Method::Distributed(dc) = &m.method else { panic!("{name}: single-process method") };
                    let quiet = match &dc.sigma {
                        NoiseLevels::All(s) => *s == 0.0,
                        NoiseLevels::PerWorker(v) => v.iter().all(|s| *s == 0.0),
                    };
                    assert!(quiet, "{name}: noisy workers");
                    if !matches!(dc.method, DistributedMethod::Qsgda) && name == "qsgda_vs_diana_fullbatch" {
                        assert!(matches!(dc.method, DistributedMethod::Diana { .. }));
                    }
                }
            }
            _ => {}
        }
    }
    assert!(builtin_recipe("nope").is_err());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unisgda"))
}

#[test]
fn binary_exit_codes_and_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Config errors exit with 1 and point at the position.
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"nme\": \"x\"\n}\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let out = bin().args(["recipe", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // A clean run exits with 0.
    let cfg = small_config(&dir.join("runs"));
    let path = dir.join("small.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let out = bin().args(["run", "--seeds", "3", "--threads", "1", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.join("runs").join("small");
    assert!(run_dir.join("lsvrgda_3.csv").exists());

    // The saved averaged iterate has a nonnegative gap.
    let out = bin()
        .arg("gap")
        .arg("--problem")
        .arg(run_dir.join("problem.json"))
        .arg("--iterate")
        .arg(run_dir.join("lsvrgda_3.iterates.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["gap"].as_f64().unwrap() >= -1e-10);

    // Every check passes on a sound config.
    let out = bin().args(["verify", "--points", "50", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> =
        String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 8);
    assert!(lines.iter().all(|r| r["pass"] == true));

    // Divergence-only failures exit with 3.
    let mut div = small_config(&dir.join("runs"));
    div.name = "div".into();
    div.gap = None;
    div.methods = vec![MethodSpec::estimator(EstimatorKind::FullBatch, StepRule::Constant { gamma: 1e3 })];
    div.problem.regularizer = Some(unisgda_core::Regularizer::None);
    let path = dir.join("div.json");
    std::fs::write(&path, div.to_json()).unwrap();
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    // gen writes a problem that loads back.
    let p = dir.join("p.json");
    let out = bin().args(["gen", "--n", "5", "--d", "2", "--lambda", "0.1", "--out"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let problem = unisgda_core::problem::read_problem(&p).unwrap();
    assert_eq!((problem.n(), problem.dim()), (5, 2));
    assert!(problem.x_star().is_ok());
}
