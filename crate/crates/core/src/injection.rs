//! Long-delay optical injection locking.
//!
//! The slave phase follows an Adler equation driven by the injected (delayed,
//! attenuated) master field:
//!
//! ```text
//! dphi_s/dt = 2*pi*detuning + 2*pi*kappa*sin(phi_inj - phi_s) + xi(t)
//! ```
//!
//! with `kappa = K * sqrt(P_inj / P_slave)` and `xi` the slave's own Wiener
//! noise. Phases are measured in the frame of the injected carrier. The
//! integrator is stochastic Heun (predictor-corrector), which is second order
//! in the drift and exact for the additive noise term.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::analysis::{self, PsdConfig};
use crate::error::{Error, Result};
use crate::phasenoise::{DriftKind, FieldTrajectory, LaserSpec, SimGrid, MAX_LINEWIDTH_DT};

/// Largest allowed `kappa * dt`.
pub const MAX_KAPPA_DT: f64 = 0.02;
/// Lock threshold on the mean frequency error, as a fraction of kappa.
pub const LOCK_TOLERANCE: f64 = 0.01;
/// Fraction of the injected run discarded as lock-in transient.
pub const TRANSIENT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionConfig {
    /// Master power arriving at the slave, W. Polarization efficiency is
    /// folded in here.
    pub injection_power: f64,
    /// Slave output power, W.
    pub slave_power: f64,
    /// `K` in `kappa = K * sqrt(P_inj / P_slave)`, Hz.
    pub kappa_coeff: f64,
    /// Free-running slave laser; `nu_offset` is its free-running center.
    pub slave_spec: LaserSpec,
    /// Scales the slave's intrinsic linewidth inside the Adler equation.
    pub slave_noise_factor: f64,
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.injection_power >= 0.0 && self.injection_power.is_finite()) {
            return Err(Error::Domain(format!(
                "injection power must be >= 0, got {}",
                self.injection_power
            )));
        }
        if !(self.slave_power > 0.0 && self.slave_power.is_finite()) {
            return Err(Error::Domain(format!(
                "slave power must be > 0, got {}",
                self.slave_power
            )));
        }
        if !(self.kappa_coeff > 0.0 && self.kappa_coeff.is_finite()) {
            return Err(Error::Domain(format!(
                "kappa coefficient must be > 0, got {}",
                self.kappa_coeff
            )));
        }
        if !(self.slave_noise_factor >= 0.0 && self.slave_noise_factor.is_finite()) {
            return Err(Error::Domain(format!(
                "slave noise factor must be >= 0, got {}",
                self.slave_noise_factor
            )));
        }
        self.slave_spec.validate()
    }

    /// Effective slave linewidth in the Adler noise term, Hz.
    pub fn slave_linewidth(&self) -> f64 {
        self.slave_noise_factor * self.slave_spec.linewidth_fwhm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockReport {
    pub locked: bool,
    /// Mean free-running slave frequency minus injected carrier, Hz.
    pub detuning: f64,
    pub locking_bandwidth: f64,
    /// Mean slave frequency minus mean injected frequency, Hz.
    pub mean_freq_error: f64,
}

/// Locking bandwidth `kappa = K * sqrt(P_inj / P_slave)`, Hz.
pub fn locking_bandwidth(cfg: &InjectionConfig) -> f64 {
    cfg.kappa_coeff * (cfg.injection_power / cfg.slave_power).sqrt()
}

/// One measured point of locking bandwidth versus injected power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthPoint {
    pub injection_power: f64,
    pub slave_power: f64,
    pub bandwidth: f64,
}

/// Least-squares `K` for `bandwidth = K * sqrt(P_inj / P_slave)`.
pub fn calibrate_kappa(points: &[BandwidthPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Config("kappa calibration needs at least one point".into()));
    }
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for p in points {
        if !(p.injection_power > 0.0 && p.slave_power > 0.0) {
            return Err(Error::Config(format!(
                "calibration powers must be > 0, got ({}, {})",
                p.injection_power, p.slave_power
            )));
        }
        let x = (p.injection_power / p.slave_power).sqrt();
        sxx += x * x;
        sxy += x * p.bandwidth;
    }
    Ok(sxy / sxx)
}

/// Integrate the slave laser under injection by `injected`.
///
/// Samples of `injected` before its `valid_from` carry no light, so the slave
/// runs free there. The lock report uses the final 80 % of the injected part
/// of the run.
pub fn simulate_slave(
    injected: &FieldTrajectory,
    cfg: &InjectionConfig,
    grid: &SimGrid,
) -> Result<(FieldTrajectory, LockReport)> {
    cfg.validate()?;
    if !injected.grid.same_sampling(grid) {
        return Err(Error::GridMismatch);
    }
    let dt = grid.dt;
    let kappa = locking_bandwidth(cfg);
    if kappa * dt > MAX_KAPPA_DT {
        return Err(Error::StepSize(format!(
            "kappa*dt = {:.3e} exceeds {MAX_KAPPA_DT}; reduce dt below {:.3e} s",
            kappa * dt,
            MAX_KAPPA_DT / kappa
        )));
    }
    let slave_lw = cfg.slave_linewidth();
    if slave_lw * dt > MAX_LINEWIDTH_DT {
        return Err(Error::GridTooCoarse(format!(
            "slave linewidth*dt = {:.3e} exceeds {MAX_LINEWIDTH_DT}",
            slave_lw * dt
        )));
    }
    let n = grid.n_samples;
    let start = injected.valid_from;
    if n.saturating_sub(start) < 10 {
        return Err(Error::SpanTooShort(format!(
            "only {} injected samples",
            n.saturating_sub(start)
        )));
    }
    let report_from = start + ((n - start) as f64 * TRANSIENT_FRACTION) as usize;

    let nu_inj = injected.nu_offset;
    let spec = &cfg.slave_spec;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let sigma = (TAU * slave_lw * dt).sqrt();
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let drift_slope = spec.drift.magnitude / 3600.0;
    let drift_step = spec.drift.magnitude * (dt / 3600.0).sqrt();
    let mut drift_walk = 0.0;

    let detuning_at = |k: usize, walk: f64| -> f64 {
        let base = spec.nu_offset - nu_inj;
        match spec.drift.kind {
            DriftKind::None => base,
            DriftKind::Linear => base + drift_slope * grid.time(k),
            DriftKind::RandomWalk => base + walk,
        }
    };

    // The injected field enters only through its unit phasor in the frame of
    // its own carrier: sin(phi_inj - phi) = Im(u * exp(-i phi)).
    let carrier_step = Complex64::from_polar(1.0, TAU * nu_inj * dt);
    let carrier_at = |k: usize| Complex64::from_polar(1.0, TAU * nu_inj * grid.time(k));
    let unit = |k: usize, carrier: Complex64| -> Complex64 {
        let z = injected.samples[k] * carrier.conj();
        let r = z.norm_sqr().sqrt();
        if r > 0.0 {
            z / r
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    // Unwrapped injected phase, sampled sparsely; only its values at the
    // report window edges are needed.
    const UNWRAP_STRIDE: usize = 16;
    let mut inj_prev = if start < n { unit(start, carrier_at(start)).arg() } else { 0.0 };
    let mut track = |u: Complex64| -> f64 {
        let mut p = u.arg();
        p -= TAU * ((p - inj_prev) / TAU).round();
        inj_prev = p;
        p
    };

    let amp = cfg.slave_power.sqrt();
    let mut samples = Vec::with_capacity(n);
    let mut phi: f64 = rng.gen::<f64>() * TAU;
    let mut carrier = Complex64::new(1.0, 0.0);
    let mut u_k = Complex64::new(0.0, 0.0);
    let mut psi_from = 0.0;
    let mut psi_to = 0.0;
    let mut detuning_sum = 0.0;
    let mut detuning_count = 0usize;

    for k in 0..n {
        if k % 4096 == 0 {
            carrier = carrier_at(k);
        }
        let (sin_phi, cos_phi) = phi.sin_cos();
        samples.push(Complex64::new(amp * cos_phi, amp * sin_phi) * carrier);
        if k == start {
            u_k = unit(k, carrier);
        }
        let det_k = detuning_at(k, drift_walk);
        if k >= report_from {
            detuning_sum += det_k;
            detuning_count += 1;
        }
        if k >= start && ((k - start).is_multiple_of(UNWRAP_STRIDE) || k == report_from || k + 1 == n) {
            let p = track(u_k);
            if k == report_from {
                psi_from = phi - p;
            }
            if k + 1 == n {
                psi_to = phi - p;
            }
        }
        if k + 1 == n {
            break;
        }

        if spec.drift.kind == DriftKind::RandomWalk {
            let z: f64 = StandardNormal.sample(&mut rng);
            drift_walk += drift_step * z;
        }
        let det_next = detuning_at(k + 1, drift_walk);
        let xi = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let carrier_next = carrier * carrier_step;

        if k + 1 > start {
            let u_next = unit(k + 1, carrier_next);
            let kap_k = if k >= start { kappa } else { 0.0 };
            let f0 = TAU * det_k + TAU * kap_k * (u_k * Complex64::new(cos_phi, -sin_phi)).im;
            let pred = phi + f0 * dt + xi;
            let (sp, cp) = pred.sin_cos();
            let f1 = TAU * det_next + TAU * kappa * (u_next * Complex64::new(cp, -sp)).im;
            phi += 0.5 * (f0 + f1) * dt + xi;
            u_k = u_next;
        } else {
            phi += TAU * 0.5 * (det_k + det_next) * dt + xi;
        }
        carrier = carrier_next;
    }
    let window = grid.time(n - 1) - grid.time(report_from);
    let mean_freq_error = if window > 0.0 {
        (psi_to - psi_from) / (TAU * window)
    } else {
        0.0
    };
    let locked = kappa > 0.0 && mean_freq_error.abs() <= LOCK_TOLERANCE * kappa;
    let report = LockReport {
        locked,
        detuning: detuning_sum / detuning_count.max(1) as f64,
        locking_bandwidth: kappa,
        mean_freq_error,
    };
    let out = FieldTrajectory {
        grid: *grid,
        samples,
        nu_offset: if locked { nu_inj } else { spec.nu_offset },
        valid_from: 0,
    };
    Ok((out, report))
}

/// Stationary variance of the slave's phase error about its locked fixed
/// point, rad^2, from the linearized Adler equation: an Ornstein-Uhlenbeck
/// process with restoring rate `2 pi kappa cos(psi0)` driven by the master's
/// and the slave's phase diffusion. Infinite outside the locking range.
pub fn lock_phase_variance(master_linewidth: f64, cfg: &InjectionConfig, detuning: f64) -> f64 {
    let kappa = locking_bandwidth(cfg);
    if !(detuning.abs() < kappa) {
        return f64::INFINITY;
    }
    let cos_psi = (1.0 - (detuning / kappa).powi(2)).sqrt();
    (master_linewidth + cfg.slave_linewidth()) / (2.0 * kappa * cos_psi)
}

/// Beat-note FWHM predicted by the noise model, Hz.
///
/// A locked slave tracks the delayed master, so when the OIL delay is much
/// longer than the coherence time its output carries an independent copy of
/// the master's phase noise and the beat against the master is the sum of two
/// master linewidths. An unlocked slave keeps its own (scaled) linewidth.
pub fn predicted_beat_fwhm(master_linewidth: f64, cfg: &InjectionConfig, locked: bool) -> f64 {
    if locked {
        2.0 * master_linewidth
    } else {
        master_linewidth + cfg.slave_linewidth()
    }
}

/// FWHM of the beat spectrum between `master` and `slave`, Hz.
///
/// `delay` is the master-to-slave delay; a nonzero delay must be at least ten
/// coherence times of a line of width `expected_fwhm / 2`. Fields with no AC
/// beat at all (for example a field beaten against itself) return zero width.
pub fn beat_linewidth_check(
    master: &FieldTrajectory,
    slave: &FieldTrajectory,
    delay: f64,
    expected_fwhm: f64,
) -> Result<f64> {
    if delay > 0.0 && expected_fwhm > 0.0 {
        let tc = 2.0 / (std::f64::consts::PI * expected_fwhm);
        if delay < 10.0 * tc {
            return Err(Error::Domain(format!(
                "delay {delay:.3e} s is not long compared with the coherence time {tc:.3e} s"
            )));
        }
    }
    let cfg = PsdConfig::for_expected_fwhm(expected_fwhm.max(1.0 / master.grid.span()), master.grid.dt);
    let spectrum = analysis::beat_psd(master, slave, &cfg)?;
    if spectrum.is_flat() {
        return Ok(0.0);
    }
    analysis::fwhm(&spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasenoise::laser_field;

    fn cfg(p_inj: f64, k: f64, slave: LaserSpec) -> InjectionConfig {
        InjectionConfig {
            injection_power: p_inj,
            slave_power: 10e-3,
            kappa_coeff: k,
            slave_spec: slave,
            slave_noise_factor: 1.0,
        }
    }

    const K_ANCHOR: f64 = 2.194e10;

    #[test]
    fn bandwidth_anchor() {
        let slave = LaserSpec::new(0.0, 5e6, 10e-3).unwrap();
        let b12 = locking_bandwidth(&cfg(12e-6, K_ANCHOR, slave));
        assert!((b12 - 760e6).abs() < 0.5e6, "{b12}");
        assert_eq!(locking_bandwidth(&cfg(0.0, K_ANCHOR, slave)), 0.0);
        let b4 = locking_bandwidth(&cfg(4e-6, K_ANCHOR, slave));
        assert!((b4 - 438.8e6).abs() < 0.5e6, "{b4}");
        assert!(b4 >= 267e6);
    }

    #[test]
    fn bandwidth_scaling_is_sqrt() {
        let slave = LaserSpec::new(0.0, 0.0, 10e-3).unwrap();
        for p in [1e-6, 3e-6, 7e-6] {
            let r = locking_bandwidth(&cfg(2.0 * p, K_ANCHOR, slave)) / locking_bandwidth(&cfg(p, K_ANCHOR, slave));
            assert!((r - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration() {
        let k = calibrate_kappa(&[BandwidthPoint {
            injection_power: 12e-6,
            slave_power: 10e-3,
            bandwidth: 760e6,
        }])
        .unwrap();
        let expected = 760e6 / (12e-6f64 / 1e-2).sqrt();
        assert!((k - expected).abs() < 1.0);
        assert!((k / 2.194e10 - 1.0).abs() < 1e-3);

        let unit = calibrate_kappa(&[BandwidthPoint {
            injection_power: 3e-3,
            slave_power: 3e-3,
            bandwidth: 5e8,
        }])
        .unwrap();
        assert_eq!(unit, 5e8);

        assert!(matches!(calibrate_kappa(&[]), Err(Error::Config(_))));
        assert!(calibrate_kappa(&[BandwidthPoint {
            injection_power: 0.0,
            slave_power: 1.0,
            bandwidth: 1.0
        }])
        .is_err());
    }

    #[test]
    fn calibration_with_noise() {
        let k_true = 2.0e10;
        let pts: Vec<_> = [(2e-6, 1.01), (10e-6, 0.99)]
            .iter()
            .map(|&(p, noise)| BandwidthPoint {
                injection_power: p,
                slave_power: 10e-3,
                bandwidth: k_true * (p / 10e-3f64).sqrt() * noise,
            })
            .collect();
        let k = calibrate_kappa(&pts).unwrap();
        assert!((k / k_true - 1.0).abs() < 0.02);
    }

    fn noiseless_run(detuning_over_kappa: f64, n: usize) -> (FieldTrajectory, LockReport, FieldTrajectory) {
        let kappa = 100e6;
        let dt = 1e-10;
        let grid = SimGrid::new(dt, n, 5).unwrap();
        let master = laser_field(&LaserSpec::new(0.0, 0.0, 1e-6).unwrap(), &grid.reseeded(1, 0)).unwrap();
        let slave = LaserSpec::new(detuning_over_kappa * kappa, 0.0, 10e-3).unwrap();
        let c = InjectionConfig {
            injection_power: 10e-3,
            slave_power: 10e-3,
            kappa_coeff: kappa,
            slave_spec: slave,
            slave_noise_factor: 1.0,
        };
        let (out, rep) = simulate_slave(&master, &c, &grid).unwrap();
        (out, rep, master)
    }

    #[test]
    fn zero_detuning_converges_in_phase() {
        let (out, rep, master) = noiseless_run(0.0, 20_000);
        assert!(rep.locked);
        let rel = (out.samples.last().unwrap() / master.samples.last().unwrap()).arg();
        assert!(rel.abs() < 1e-6, "{rel}");
    }

    #[test]
    fn half_kappa_fixed_point() {
        let (out, rep, master) = noiseless_run(0.5, 20_000);
        assert!(rep.locked);
        let rel = (out.samples.last().unwrap() / master.samples.last().unwrap()).arg();
        assert!((rel - std::f64::consts::FRAC_PI_6).abs() < 1e-3, "{rel}");
    }

    #[test]
    fn outside_band_pulls() {
        let (_, rep, _) = noiseless_run(1.5, 200_000);
        assert!(!rep.locked);
        let expected = (1.5f64 * 1.5 - 1.0).sqrt() * 100e6;
        assert!((rep.mean_freq_error / expected - 1.0).abs() < 0.01, "{}", rep.mean_freq_error);
    }

    #[test]
    fn step_size_and_grid_errors() {
        let grid = SimGrid::new(1e-9, 100, 1).unwrap();
        let master = laser_field(&LaserSpec::new(0.0, 0.0, 1e-6).unwrap(), &grid).unwrap();
        let slave = LaserSpec::new(0.0, 0.0, 10e-3).unwrap();
        let c = cfg(10e-3, 1e8, slave);
        assert!(matches!(simulate_slave(&master, &c, &grid), Err(Error::StepSize(_))));
        let other = SimGrid::new(1e-9, 101, 1).unwrap();
        assert!(matches!(simulate_slave(&master, &c, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn phase_variance_at_defaults() {
        let slave = LaserSpec::new(153e6, 5e6, 10e-3).unwrap();
        let c = cfg(4e-6, K_ANCHOR, slave);
        let v = lock_phase_variance(5e6, &c, 153e6);
        assert!((v - 0.01216).abs() < 1e-4, "{v}");
        assert!(lock_phase_variance(5e6, &c, 500e6).is_infinite());
    }

    #[test]
    fn predicted_widths() {
        let slave = LaserSpec::new(0.0, 5e6, 10e-3).unwrap();
        let mut c = cfg(4e-6, K_ANCHOR, slave);
        assert_eq!(predicted_beat_fwhm(5e6, &c, true), 10e6);
        c.slave_noise_factor = 0.45;
        assert!((predicted_beat_fwhm(5e6, &c, false) - 7.25e6).abs() < 1.0);
    }

    #[test]
    fn self_beat_has_zero_width() {
        let grid = SimGrid::new(1e-9, 1 << 14, 2).unwrap();
        let f = laser_field(&LaserSpec::new(0.0, 0.0, 1e-3).unwrap(), &grid).unwrap();
        assert_eq!(beat_linewidth_check(&f, &f, 0.0, 10e6).unwrap(), 0.0);
    }
}
