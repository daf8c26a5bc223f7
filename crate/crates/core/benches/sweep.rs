use std::hint::black_box;

use agc_core::config::RunConfig;
use agc_core::engine::{compare, default_cases, ControllerKind, SystemSettings};
use agc_core::exec::Exec;
use agc_core::hindsight::sweep;
use agc_core::signals::{synth_ace, SynthConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn series(hours: f64, seed: u64) -> agc_core::signals::AceSeries {
    synth_ace(&SynthConfig {
        seed,
        horizon_s: hours * 3600.0,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn bench_sweep(c: &mut Criterion) {
    let ace = series(2.0, 1);
    let cfg = RunConfig {
        e0_draws: 4,
        ..RunConfig::default()
    };
    let sweep_cfg = cfg.sweep_config(&cfg.case()).unwrap();
    let mut group = c.benchmark_group("hindsight_sweep_2h");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| black_box(sweep(&ace, &sweep_cfg, exec).unwrap()))
        });
    }
    group.finish();
}

fn bench_compare(c: &mut Criterion) {
    let ace = series(6.0, 2);
    let cases = default_cases();
    let kinds = [ControllerKind::Lqr, ControllerKind::Pjm];
    let policies = vec![None; cases.len()];
    let settings = SystemSettings::default();
    let mut group = c.benchmark_group("compare_6h");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| black_box(compare(&ace, &cases, &kinds, &policies, &settings, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_compare);
criterion_main!(benches);
