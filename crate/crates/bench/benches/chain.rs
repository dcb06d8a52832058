use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use costchart::chain::{build_transition, ChainArtifacts};
use costchart::optimizer::Evaluator;
use costchart::simulator::{simulate, SimConfig};
use costchart_bench::{model, policy};

fn transition(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_transition");
    for v in [50, 100, 200] {
        let m = model("ldl", v);
        group.bench_with_input(BenchmarkId::from_parameter(v), &m, |b, m| {
            b.iter(|| build_transition(black_box(m), policy("ldl")).unwrap())
        });
    }
    group.finish();
}

fn stationary(c: &mut Criterion) {
    let m = model("sens24", 100);
    c.bench_function("artifacts/sens24", |b| {
        b.iter(|| ChainArtifacts::build(black_box(&m), policy("sens24")).unwrap())
    });
}

fn evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for name in ["ldl", "sens24"] {
        let m = model(name, 100);
        let eval = Evaluator::new(&m).unwrap();
        group.bench_function(name, |b| b.iter(|| eval.evaluate(black_box(policy(name))).unwrap()));
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let m = model("sens24", 100);
    let cfg = SimConfig {
        intervals: 5_000,
        ..SimConfig::default()
    };
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    group.bench_function("sens24/5000", |b| b.iter(|| simulate(&m, policy("sens24"), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, transition, stationary, evaluate, simulation);
criterion_main!(benches);
