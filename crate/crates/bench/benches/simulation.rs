use criterion::{criterion_group, criterion_main, Criterion};
use rachsim_bench::{bundled_params, side_for};
use rachsim_core::sim::{run_realization, sample_deployment};

fn realization(c: &mut Criterion) {
    let set = bundled_params("fig7");
    let side = side_for(&set, 100.0);
    let m = set.traffic.slots();
    let mut group = c.benchmark_group("realization");
    group.sample_size(20);
    group.bench_function("deployment/100bs", |b| b.iter(|| sample_deployment(&set.network, side, 3).unwrap()));
    let dep = sample_deployment(&set.network, side, 3).unwrap();
    for scheme in &set.schemes {
        group.bench_function(format!("fig7/{}", scheme.label()), |b| {
            b.iter(|| run_realization(&dep, &set.network, &set.traffic, *scheme, m, 11))
        });
    }
    group.finish();
}

criterion_group!(benches, realization);
criterion_main!(benches);
