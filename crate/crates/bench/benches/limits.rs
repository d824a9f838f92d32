use criterion::{criterion_group, criterion_main, Criterion};
use otlimit_bench::transport_instance;
use otlimit_core::{
    bootstrap_ot_wcc, sample_limit_wcc, BootstrapConfig, CostProcess, DiscreteMeasure, FixedCost, GaussianTripleModel,
    LimitOptions, Point, Scaling,
};
use std::hint::black_box;

fn limit_sampling(c: &mut Criterion) {
    let (mu, nu, cost) = transport_instance(5, 21);
    let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
    let scaling = Scaling::TwoSample { lambda: 0.5 };
    let opts = LimitOptions::default();
    c.bench_function("sample_limit_wcc_5x5_10k", |b| {
        b.iter(|| sample_limit_wcc(&mu, &nu, &cost, &model, scaling, black_box(10_000), &opts, 1).unwrap())
    });
}

fn bootstrap(c: &mut Criterion) {
    let mu = DiscreteMeasure::on_line(&[0.0, 1.0], &[0.3, 0.7]).unwrap();
    let nu = DiscreteMeasure::on_line(&[0.5, 2.0], &[0.6, 0.4]).unwrap();
    let mut rng = otlimit_core::rng::substream(3, 0);
    let (x, y) = (mu.sample(4000, &mut rng), nu.sample(4000, &mut rng));
    let est = FixedCost(|a: &Point, b: &Point| a.dist2(b));
    let cfg = BootstrapConfig::new(500, 9);
    c.bench_function("bootstrap_wcc_n4000_b500", |b| {
        b.iter(|| bootstrap_ot_wcc(black_box(&x), black_box(&y), &est, &cfg).unwrap())
    });
}

criterion_group!(benches, limit_sampling, bootstrap);
criterion_main!(benches);
