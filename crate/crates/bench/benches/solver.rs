use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qdfeedback::{
    charge, find_all_roots, integrate, sweep, transmission_amplitude, CavityParams, ChargeModel,
    Direction, FeedbackModel, FeedbackParams, PumpSchedule, QdParams, SolverSettings, SweepSpec,
    System,
};

fn model(c: &mut Criterion) {
    let cav = CavityParams::default();
    let qd = QdParams::new(-3.0, 1.0, 5.0);
    c.bench_function("transmission_amplitude", |b| {
        b.iter(|| transmission_amplitude(&cav, &qd, black_box(0.7), black_box(-2.5)))
    });
}

fn roots(c: &mut Criterion) {
    let cav = CavityParams::default();
    let qd = QdParams::new(-15.0, 1.0, 5.0);
    let fb = FeedbackParams::calibrated(1000.0, cav.eta_out(), 0.35);
    let settings = SolverSettings::default();
    c.bench_function("find_all_roots/1nW", |b| {
        b.iter(|| find_all_roots(&cav, &qd, &fb, black_box(-1.0), &settings))
    });
}

fn sweeps(c: &mut Criterion) {
    let sys = System::new(
        CavityParams::default(),
        QdParams::new(-10.0, 1.0, 5.0),
        FeedbackModel::default(),
    );
    let spec = SweepSpec::new(-30.0, 30.0, 1001, Direction::Up, 1000.0);
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("1001pts/1nW", |b| b.iter(|| sweep(&sys, black_box(&spec))));
    group.finish();
}

fn dynamics(c: &mut Criterion) {
    let model = ChargeModel::default();
    let sched = PumpSchedule::constant(0.0, 10.0, 10.0);
    let grid = charge::time_grid(0.0, 10.0, 101);
    c.bench_function("integrate/10ms", |b| {
        b.iter(|| integrate(&model, &sched, black_box(&grid), 1e-3))
    });
}

criterion_group!(benches, model, roots, sweeps, dynamics);
criterion_main!(benches);
