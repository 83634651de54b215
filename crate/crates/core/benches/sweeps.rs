//! Sequential against parallel execution on the heavy loops. On a single core
//! the two should be close; the gap shows the rayon overhead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use midlayer::cluster::{expansion_terms, ClusterOptions};
use midlayer::oracle::{polymer_subset_histogram, sweep_histogram};
use midlayer::sampler::{MuHatSampler, SampleRun};
use midlayer::{Exec, Fugacity, LayerGraph, Side};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gray_sweep(c: &mut Criterion) {
    // 20 vertices on the swept side: 2^20 subsets.
    let g = LayerGraph::new(6, 3).unwrap();
    let mut group = c.benchmark_group("gray_sweep_b63");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sweep_histogram(black_box(&g), Side::Upper, exec).unwrap())
        });
    }
    group.finish();
}

fn restricted(c: &mut Criterion) {
    let g = LayerGraph::new(5, 3).unwrap();
    let mut group = c.benchmark_group("restricted_histogram_d3");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| polymer_subset_histogram(black_box(&g), Side::Upper, exec).unwrap())
        });
    }
    group.finish();
}

fn clusters(c: &mut Criterion) {
    let g = LayerGraph::new(7, 4).unwrap();
    let lambda = Fugacity::one();
    let mut group = c.benchmark_group("expansion_terms_d4_k3");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = ClusterOptions { exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| expansion_terms(black_box(&g), &lambda, 3, opts).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let g = LayerGraph::new(5, 3).unwrap();
    let sampler = MuHatSampler::new(&g, &Fugacity::one()).unwrap();
    let mut group = c.benchmark_group("mu_hat_10k_samples_d3");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| SampleRun::generate(black_box(&sampler), 3, 42, 10_000, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, gray_sweep, restricted, clusters, sampling);
criterion_main!(benches);
