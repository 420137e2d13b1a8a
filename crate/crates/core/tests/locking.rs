use std::f64::consts::TAU;

use longoil::channel::{propagate, FiberSpec};
use longoil::hom::auto_dt;
use longoil::injection::{locking_bandwidth, simulate_slave, InjectionConfig, LockReport};
use longoil::phasenoise::{laser_field, unwrap_phase, FieldTrajectory, LaserSpec, SimGrid};
use proptest::prelude::*;

const KAPPA: f64 = 100e6;

fn noiseless(detuning: f64, n: usize) -> (FieldTrajectory, LockReport, FieldTrajectory) {
    let grid = SimGrid::new(1e-10, n, 3).unwrap();
    let master = laser_field(&LaserSpec::new(0.0, 0.0, 1e-6).unwrap(), &grid.reseeded(1, 0)).unwrap();
    let cfg = InjectionConfig {
        injection_power: 1e-2,
        slave_power: 1e-2,
        kappa_coeff: KAPPA,
        slave_spec: LaserSpec::new(detuning, 0.0, 1e-2).unwrap(),
        slave_noise_factor: 1.0,
    };
    let (slave, report) = simulate_slave(&master, &cfg, &grid).unwrap();
    (slave, report, master)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn inside_band_settles_at_arcsine(x in -0.95f64..0.95) {
        let (slave, report, master) = noiseless(x * KAPPA, 40_000);
        prop_assert!(report.locked);
        let offset = (slave.samples.last().unwrap() / master.samples.last().unwrap()).arg();
        prop_assert!((offset - x.asin()).abs() < 1e-3, "{} vs {}", offset, x.asin());
    }

    #[test]
    fn outside_band_pulls_to_beat(x in 1.05f64..3.0, sign in prop::bool::ANY) {
        let d = if sign { x } else { -x } * KAPPA;
        let (_, report, _) = noiseless(d, 200_000);
        prop_assert!(!report.locked);
        let expected = d.signum() * (d * d - KAPPA * KAPPA).sqrt();
        prop_assert!((report.mean_freq_error / expected - 1.0).abs() < 0.01, "{} vs {}", report.mean_freq_error, expected);
    }

    #[test]
    fn bandwidth_grows_as_square_root(p in 1e-8f64..1e-3, factor in 1.01f64..100.0) {
        let cfg = |p: f64| InjectionConfig {
            injection_power: p,
            slave_power: 1e-2,
            kappa_coeff: 2.194e10,
            slave_spec: LaserSpec::new(0.0, 0.0, 1e-2).unwrap(),
            slave_noise_factor: 1.0,
        };
        let lo = locking_bandwidth(&cfg(p));
        let hi = locking_bandwidth(&cfg(p * factor));
        prop_assert!(hi > lo);
        prop_assert!(hi / lo < factor);
        prop_assert!((hi / lo - factor.sqrt()).abs() < 1e-9 * factor);
    }
}

#[test]
fn frequency_locked_but_not_phase_locked() {
    // 1 km of fiber is about 75 coherence times of a 5 MHz line.
    let lw = 5e6;
    let cfg = InjectionConfig {
        injection_power: 4e-6,
        slave_power: 1e-2,
        kappa_coeff: 2.194e10,
        slave_spec: LaserSpec::new(153e6, lw, 1e-2).unwrap(),
        slave_noise_factor: 1.0,
    };
    let kappa = locking_bandwidth(&cfg);
    let dt = auto_dt(0.5e-9, kappa);
    let fiber = FiberSpec::smf(1.0);
    let d = fiber.delay_samples(dt);
    let u = (40e-6 / dt) as usize;
    let grid = SimGrid::new(dt, d + u, 11).unwrap();
    let master = laser_field(&LaserSpec::new(0.0, lw, 1e-3).unwrap(), &grid.reseeded(1, 0)).unwrap();
    let injected = propagate(&master, &fiber).unwrap().window(d, u).unwrap();
    let sgrid = SimGrid::new(dt, u, 11).unwrap().reseeded(3, 0);
    let (slave, report) = simulate_slave(&injected, &cfg, &sgrid).unwrap();
    assert!(report.locked);
    assert!(report.mean_freq_error.abs() <= 0.005 * kappa, "{report:?}");

    let skip = u / 5;
    let diff = |other: &[num_complex::Complex64]| -> Vec<f64> {
        unwrap_phase((skip..u).map(|k| (slave.samples[k] * other[k].conj()).arg()))
    };
    // Against the light it was locked to, the slave phase stays bounded.
    let to_injected = diff(&injected.samples);
    let mean = to_injected.iter().sum::<f64>() / to_injected.len() as f64;
    let var = to_injected.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / to_injected.len() as f64;
    assert!(var < 0.05, "locked phase variance {var}");

    // Against the master as it is now, the difference diffuses: the
    // variance at lag T grows linearly with slope 2 pi (2 dnu).
    let master_now = master.window(d, u).unwrap();
    let to_master = diff(&master_now.samples);
    let lag_var = |lag: usize| {
        let inc: Vec<f64> = to_master.windows(lag + 1).map(|w| w[lag] - w[0]).collect();
        let m = inc.iter().sum::<f64>() / inc.len() as f64;
        inc.iter().map(|x| (x - m).powi(2)).sum::<f64>() / inc.len() as f64
    };
    let lags = [(10e-9 / dt) as usize, (20e-9 / dt) as usize, (40e-9 / dt) as usize];
    let vars: Vec<f64> = lags.iter().map(|&l| lag_var(l)).collect();
    for (&l, &v) in lags.iter().zip(&vars) {
        let expected = TAU * 2.0 * lw * l as f64 * dt;
        assert!((v / expected - 1.0).abs() < 0.2, "lag {l}: {v} vs {expected}");
    }
    assert!(vars[2] > 3.0 * vars[0]);
}
