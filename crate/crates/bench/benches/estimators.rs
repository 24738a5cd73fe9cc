use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use unisgda_core::problem::generate_quadratic_game;
use unisgda_core::{
    DistributedConfig, DistributedEstimator, DistributedMethod, EstimatorKind, GeneratorConfig, GradientEstimator,
    ProblemInstance, Quantizer, Regularizer, SamplingScheme, SeededRng, SingleEstimator, Vector,
};

fn problem() -> ProblemInstance {
    let op = generate_quadratic_game(&GeneratorConfig::new(100, 20, 0, 1.0)).unwrap();
    ProblemInstance::with_reference(op, Regularizer::L1Box { lambda: 0.05, radius: 1.0 }, 1e-12).unwrap()
}

fn single(c: &mut Criterion) {
    let p = problem();
    let x0 = Vector::zeros(p.dim());
    let x = SeededRng::new(1).gaussian_vector(p.dim(), 1.0);
    let importance = SamplingScheme::Importance { weights: Vec::new(), b: 1 }.resolve(p.constants().unwrap());
    let kinds = [
        EstimatorKind::FullBatch,
        EstimatorKind::SgdaAs { scheme: SamplingScheme::uniform(1) },
        EstimatorKind::SgdaAs { scheme: importance },
        EstimatorKind::Lsvrgda { p: 0.01 },
        EstimatorKind::SagaSgda,
        EstimatorKind::Csgda,
        EstimatorKind::SegaSgda,
    ];
    let mut g = c.benchmark_group("sample");
    for (i, kind) in kinds.into_iter().enumerate() {
        let mut e = SingleEstimator::new(kind.clone(), p.operator(), &x0).unwrap();
        let mut rng = SeededRng::new(7);
        g.bench_function(BenchmarkId::new(kind.name(), i), |b| b.iter(|| e.sample(black_box(&x), &mut rng).unwrap()));
    }
    g.finish();
}

fn distributed(c: &mut Criterion) {
    let p = problem();
    let x0 = Vector::zeros(p.dim());
    let x = SeededRng::new(1).gaussian_vector(p.dim(), 1.0);
    let methods = [
        DistributedMethod::Qsgda,
        DistributedMethod::Diana { alpha: None },
        DistributedMethod::VrDiana { alpha: None, p: None, shared_coin: false },
    ];
    let mut g = c.benchmark_group("round");
    for m in methods {
        let cfg = DistributedConfig::new(m, 10, Quantizer::RandK { k: 5 });
        let mut e = DistributedEstimator::new(cfg, p.operator(), &x0).unwrap();
        let mut rng = SeededRng::new(7);
        g.bench_function(m.name(), |b| b.iter(|| e.sample(black_box(&x), &mut rng).unwrap()));
    }
    g.finish();
}

fn prox(c: &mut Criterion) {
    let reg = Regularizer::L1Box { lambda: 0.05, radius: 1.0 };
    let x = SeededRng::new(3).gaussian_vector(1000, 1.0);
    c.bench_function("prox_l1_box_d1000", |b| b.iter(|| reg.prox(0.1, black_box(&x)).unwrap()));
}

criterion_group!(benches, single, distributed, prox);
criterion_main!(benches);
