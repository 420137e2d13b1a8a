use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use longoil::channel::FiberSpec;
use longoil::detect::DetectorSpec;
use longoil::exec::Exec;
use longoil::hom::{auto_dt, run_hom, BobMode, HomSetup};
use longoil::injection::InjectionConfig;
use longoil::lockband::{detuning_sweep, SweepSpec};
use longoil::phasenoise::LaserSpec;

const K: f64 = 2.194e10;

fn small_hom() -> HomSetup {
    HomSetup {
        master: LaserSpec::new(0.0, 5e6, 1e-3).unwrap(),
        bob: LaserSpec::new(153e6, 5e6, 10e-3).unwrap(),
        mode: BobMode::FreeRunning,
        oil: FiberSpec::smf(25.0),
        bob_link: FiberSpec::smf(50.0),
        alice_link: FiberSpec::smf(0.0),
        pol_overlap: 0.98,
        arm_power_ratio: 1.0,
        detectors: [DetectorSpec::default(); 2],
        click_rate: 5e5,
        dt: auto_dt(0.5e-9, 153e6),
        window: 50e-6,
        settle: 100e-9,
        bin_width: 0.5e-9,
        max_tau: 100e-9,
        pair_budget: 2e5,
        trials: 2,
        seed: 3,
    }
}

fn sweep_spec() -> SweepSpec {
    SweepSpec {
        master: LaserSpec::new(0.0, 0.0, 1e-3).unwrap(),
        injection: InjectionConfig {
            injection_power: 4e-6,
            slave_power: 10e-3,
            kappa_coeff: K,
            slave_spec: LaserSpec::new(0.0, 0.0, 10e-3).unwrap(),
            slave_noise_factor: 1.0,
        },
        window: 0.5e-6,
        dt_max: 0.1e-9,
        seed: 3,
    }
}

fn bench_hom(c: &mut Criterion) {
    let setup = small_hom();
    let mut g = c.benchmark_group("hom_clicks");
    g.sample_size(10);
    for exec in [Exec::Serial, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_hom(&setup, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let spec = sweep_spec();
    let detunings: Vec<f64> = (0..32).map(|i| i as f64 * 15e6).collect();
    let mut g = c.benchmark_group("lock_sweep");
    g.sample_size(10);
    for exec in [Exec::Serial, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| detuning_sweep(&spec, &detunings, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_hom, bench_sweep);
criterion_main!(benches);
