use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use drotree::effectiveness::{classify_all, ClassifyOptions};
use drotree::gen::{gen_random, gen_water_analog, RandomParams, SplitMix64, WaterParams};
use drotree::risk::{worst_case_expectation, FiniteDist};
use drotree::solver::{solve_benders, solve_extensive, BendersOptions};

fn risk(c: &mut Criterion) {
    let mut rng = SplitMix64::new(1);
    let mut group = c.benchmark_group("tv_worst_case");
    for n in [4usize, 16, 64] {
        let values: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 10.0)).collect();
        let probs = vec![1.0 / n as f64; n];
        let dist = FiniteDist::new(values, probs).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &dist, |b, d| {
            b.iter(|| worst_case_expectation(black_box(d), 0.3))
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for (stages, branching) in [(3, 3), (4, 3)] {
        let tree = gen_random(&RandomParams::new(7, stages, branching, 0.4)).unwrap();
        let id = format!("T{stages}_b{branching}");
        group.bench_function(BenchmarkId::new("extensive", &id), |b| b.iter(|| solve_extensive(&tree).unwrap()));
        group.bench_function(BenchmarkId::new("benders", &id), |b| {
            b.iter(|| solve_benders(&tree, BendersOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn classify(c: &mut Criterion) {
    let tree = gen_water_analog(&WaterParams::new(1)).unwrap();
    let out = solve_extensive(&tree).unwrap();
    c.bench_function("classify_water", |b| {
        b.iter(|| classify_all(&out, &tree, ClassifyOptions::default()).unwrap())
    });
}

criterion_group!(benches, risk, solvers, classify);
criterion_main!(benches);
