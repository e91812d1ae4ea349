use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use eclipse_core::analysis::{mc_validate_findnode_with, mc_validate_min_id_with, IdModel};
use eclipse_core::experiment::{run_batch_with, ExperimentBatch};
use eclipse_core::idpool::build_pool_with;
use eclipse_core::par::Execution;
use eclipse_core::rng::rng_from_seed;
use eclipse_core::simnet::{PoolCache, ScenarioConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn findnode_mc(c: &mut Criterion) {
    let mut g = c.benchmark_group("mc_findnode_N136_a8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                mc_validate_findnode_with(
                    17,
                    136,
                    8,
                    black_box(50_000),
                    &mut rng_from_seed(1),
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn min_id_mc(c: &mut Criterion) {
    let mut g = c.benchmark_group("mc_min_id_m100_n100");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                mc_validate_min_id_with(
                    100,
                    100,
                    black_box(50_000),
                    &mut rng_from_seed(2),
                    IdModel::Continuous,
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn pool_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_pool_200k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_pool_with(black_box(200_000), &mut rng_from_seed(3), exec).unwrap())
        });
    }
    g.finish();
}

fn restart_batch(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::preset("geth-1.8").unwrap();
    cfg.honest_count = 500;
    if let Some(a) = cfg.attack.as_mut() {
        a.config.pool_size = 50_000;
    }
    let batch = ExperimentBatch::new(cfg, 0..8);
    let pools = PoolCache::new();
    let mut g = c.benchmark_group("restart_batch_8_seeds");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_batch_with(&batch, exec, &pools).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, findnode_mc, min_id_mc, pool_build, restart_batch);
criterion_main!(benches);
