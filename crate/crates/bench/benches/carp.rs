use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use carp_core::engine::simulate_trajectory;
use carp_core::mle::{fit, log_likelihood, FitConfig};
use carp_core::synthetic::fixture_2013;
use carp_core::{risk_influence, solve_steady_state, CarpModel, MeanFieldConfig, NetworkState};

fn fixture_benches(c: &mut Criterion) {
    let f = fixture_2013().unwrap();
    let g = &f.network.graph;
    let l = f.network.likelihoods();
    let h = &f.run.history;
    let cfg = MeanFieldConfig::default();

    c.bench_function("log_likelihood", |b| {
        b.iter(|| log_likelihood(black_box(h), g, &l, &f.params).unwrap())
    });
    c.bench_function("steady_state", |b| {
        b.iter(|| solve_steady_state(black_box(&l), &f.params, g, &cfg).unwrap())
    });
    c.bench_function("risk_influence", |b| {
        b.iter(|| risk_influence(g, black_box(&l), &f.params, &cfg).unwrap())
    });

    let model = CarpModel::from_network(&f.network, f.params).unwrap();
    let start = NetworkState::passive(model.len());
    c.bench_function("simulate_100x1000", |b| {
        b.iter(|| simulate_trajectory(&model, &start, 1000, 100, black_box(7)).unwrap())
    });

    let mut slow = c.benchmark_group("fit");
    slow.sample_size(10);
    slow.bench_function("fixture", |b| {
        b.iter(|| fit(black_box(h), g, &l, &FitConfig::default()).unwrap())
    });
    slow.finish();
}

criterion_group!(benches, fixture_benches);
criterion_main!(benches);
