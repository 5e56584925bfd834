use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gwcrp::{
    dahl_partition, fit_region_mle, gibbs_sweep, initial_state, run_chain, ChainInit, GwcrpConfig, Kernel,
    NewtonOptions,
};
use gwcrp_bench::lattice_fixture;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mle(c: &mut Criterion) {
    let fx = lattice_fixture(1);
    let region: Vec<_> = fx.records.iter().filter(|r| r.region == 0).cloned().collect();
    let opts = NewtonOptions::default();
    c.bench_function("mle_fit_region_60", |b| {
        b.iter(|| fit_region_mle("r0c0", black_box(&region), &fx.design.partition, None, &opts).unwrap())
    });
}

fn sweep(c: &mut Criterion) {
    let fx = lattice_fixture(2);
    let model = &fx.prepared.model;
    let weights = fx.design.graph.weights(1.0, Kernel::Exp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut scratch = Vec::new();
    c.bench_function("gibbs_sweep_lattice_64", |b| {
        b.iter_batched(
            || initial_state(model, ChainInit::Singletons, &mut ChaCha8Rng::seed_from_u64(4)).unwrap(),
            |mut state| gibbs_sweep(&mut state, model, &weights, 1.0, &mut rng, &mut scratch).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn dahl(c: &mut Criterion) {
    let fx = lattice_fixture(5);
    let weights = fx.design.graph.weights(1.0, Kernel::Exp).unwrap();
    let config = GwcrpConfig {
        iterations: 2000,
        burn_in: 500,
        ..GwcrpConfig::default()
    };
    let trace = run_chain(&fx.prepared.model, &weights, &config, None).unwrap();
    c.bench_function("dahl_1500_draws_64_regions", |b| {
        b.iter(|| dahl_partition(black_box(&trace.label_draws)).unwrap())
    });
}

fn chain(c: &mut Criterion) {
    let fx = lattice_fixture(6);
    let weights = fx.design.graph.weights(1.0, Kernel::Exp).unwrap();
    let config = GwcrpConfig {
        iterations: 200,
        burn_in: 50,
        ..GwcrpConfig::default()
    };
    let mut group = c.benchmark_group("chain");
    group.sample_size(10);
    group.bench_function("run_chain_200_iters", |b| {
        b.iter(|| run_chain(&fx.prepared.model, &weights, &config, Some(&fx.prepared.likelihoods)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mle, sweep, dahl, chain);
criterion_main!(benches);
