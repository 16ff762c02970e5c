use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rachsim_bench::bundled_params;
use rachsim_core::analysis::{self, ActivityState};
use rachsim_core::queue;

fn integrals(c: &mut Criterion) {
    c.bench_function("interference_integral/alpha4", |b| {
        b.iter(|| analysis::interference_integral(black_box(0.1), black_box(4.0)).unwrap())
    });
    c.bench_function("interference_integral/alpha3.5", |b| {
        b.iter(|| analysis::interference_integral(black_box(0.1), black_box(3.5)).unwrap())
    });
}

fn slot_one(c: &mut Criterion) {
    let set = bundled_params("fig3");
    let act = ActivityState::new(0.1, 1.0, &set.network).unwrap();
    c.bench_function("preamble_success", |b| b.iter(|| analysis::preamble_success(black_box(&act), &set.network)));
    c.bench_function("preamble_detection", |b| b.iter(|| analysis::preamble_detection(black_box(&act), &set.network)));
}

fn evolution(c: &mut Criterion) {
    let set = bundled_params("fig9");
    let m = set.traffic.slots();
    let scheme = set.schemes[0];
    c.bench_function("evolve/fig9", |b| {
        b.iter(|| queue::evolve(&set.network, &set.traffic, black_box(scheme), m).unwrap())
    });
}

criterion_group!(benches, integrals, slot_one, evolution);
criterion_main!(benches);
