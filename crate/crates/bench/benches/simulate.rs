use std::hint::black_box;

use buckbench_core::engine::initial_state;
use buckbench_core::{
    run_to_steady_state, ControlConfig, ConverterParams, Scheme, SimSettings, Simulator,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn sim(params: &ConverterParams, cfg: &ControlConfig) -> Simulator {
    Simulator::new(params, cfg, &SimSettings::default()).unwrap()
}

fn single_cycle(c: &mut Criterion) {
    let s = sim(&ConverterParams::default(), &ControlConfig::default());
    let st = initial_state(&s);
    c.bench_function("run_cycle_voltage_mode", |b| {
        b.iter(|| s.run_cycle(black_box(&st)).unwrap())
    });
}

fn steady_state(c: &mut Criterion) {
    let mut g = c.benchmark_group("steady_state");
    g.sample_size(20);
    let p = ConverterParams::default();
    let open = sim(&p, &ControlConfig::open_loop(0.5));
    g.bench_function("open_loop_ccm", |b| {
        b.iter(|| run_to_steady_state(black_box(&open)).unwrap())
    });
    let vm = sim(&p, &ControlConfig::default());
    g.bench_function("voltage_mode", |b| {
        b.iter(|| run_to_steady_state(black_box(&vm)).unwrap())
    });
    let light = ConverterParams { r: 180.0, ..p };
    let burst = sim(&light, &ControlConfig::with_scheme(Scheme::Burst));
    g.bench_function("burst_10mA", |b| {
        b.iter(|| run_to_steady_state(black_box(&burst)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, single_cycle, steady_state);
criterion_main!(benches);
