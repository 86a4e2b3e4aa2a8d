//! Throughput of the two momentum step forms and a full recorded run.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use stochrate_core::objectives::Objective;
use stochrate_core::optim::{
    run_allow_partial, shb_step_onestep, shb_step_twoterm, ScheduleMode, ShbState, StepForm,
    StepSchedule,
};
use stochrate_core::oracle::StochasticOracle;
use stochrate_core::seed_rng;

fn bench_step_forms(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_forms");
    for &d in &[10usize, 100] {
        let grad: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
        group.throughput(Throughput::Elements(d as u64));
        group.bench_with_input(BenchmarkId::new("one_step", d), &d, |b, &d| {
            let mut st = ShbState::init(&vec![1.0; d]);
            b.iter(|| {
                shb_step_onestep(&mut st, black_box(&grad), 1e-4, 0.5).unwrap();
            });
        });
        group.bench_with_input(BenchmarkId::new("two_term", d), &d, |b, &d| {
            let mut st = ShbState::init(&vec![1.0; d]);
            b.iter(|| {
                shb_step_twoterm(&mut st, black_box(&grad), 1e-4, 0.5).unwrap();
            });
        });
    }
    group.finish();
}

fn bench_recorded_run(c: &mut Criterion) {
    let obj = Objective::quadratic(vec![1.0, 0.5, 0.1, 0.05]).unwrap();
    let oracle = StochasticOracle::finite_sum_scaled(obj.clone(), vec![0.8, 1.2]).unwrap();
    let sched = StepSchedule::new(0.2, 2.0 / 3.0, 0.2, ScheduleMode::AsRate).unwrap();
    let w0 = vec![1.0; 4];
    let mut group = c.benchmark_group("recorded_run");
    group.throughput(Throughput::Elements(10_000));
    group.bench_function("shb_10k_steps", |b| {
        b.iter(|| {
            let mut rng = seed_rng(1, 0);
            run_allow_partial(
                &obj,
                &oracle,
                &sched,
                0.5,
                10_000,
                &w0,
                &mut rng,
                100,
                StepForm::OneStep,
            )
            .unwrap()
        });
    });
    group.finish();
}

criterion_group!(benches, bench_step_forms, bench_recorded_run);
criterion_main!(benches);
