use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fredlab::fredholm::{check_pair_algebra, random_projector};
use fredlab::parallel::map_collect;
use fredlab::runner::run_scenarios;
use fredlab::*;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn verdict(c: &mut Criterion) {
    let cyl = Cylinder::ultrastatic(CircleDiracModel::standard(SpinStructure::Trivial).into(), 1.0);
    let b0 = BoundaryCondition::GraphForm(GraphForm::new(
        SpectralCut::past(0.0),
        GraphMap::mirror(WeightRule::Decay { scale: 1.0, power: 1.0 }),
    ));
    let b1 = BoundaryCondition::aps(Side::Future);
    let schedule = [8, 16, 32, 64];

    let mut group = c.benchmark_group("fredholm_verdict");
    group.sample_size(10);
    for (name, exec) in MODES {
        let options = EngineOptions { execution: exec, ..EngineOptions::default() };
        group.bench_function(name, |b| {
            b.iter(|| fredholm_verdict(black_box(&b0), black_box(&b1), &cyl, &schedule, &options).unwrap())
        });
    }
    group.finish();
}

fn pair_algebra(c: &mut Criterion) {
    let mut group = c.benchmark_group("pair_algebra");
    for dim in [12usize, 24] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs: Vec<_> = (0..200)
            .map(|i| (random_projector(&mut rng, dim, i % (dim + 1)), random_projector(&mut rng, dim, dim / 2)))
            .collect();
        let policy = RankPolicy::default();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, dim), &pairs, |b, pairs| {
                b.iter(|| map_collect(exec, pairs, |(p0, p1)| check_pair_algebra(p0, p1, &policy).unwrap()))
            });
        }
    }
    group.finish();
}

fn golden_batch(c: &mut Criterion) {
    let scenarios = fredlab::golden::scenarios(&Default::default()).unwrap();
    let mut group = c.benchmark_group("golden_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_scenarios(black_box(&scenarios), exec)));
    }
    group.finish();
}

criterion_group!(benches, verdict, pair_algebra, golden_batch);
criterion_main!(benches);
