//! Locking-range measurements: detuning sweeps, bandwidth versus injected
//! power, and lock retention under slow frequency drift.
//!
//! Every point injects the master directly (no fiber): the delay only
//! decorrelates phase noise and has no bearing on whether the slave locks.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::injection::{locking_bandwidth, simulate_slave, InjectionConfig, LockReport};
use crate::phasenoise::{laser_field, DriftModel, LaserSpec, SimGrid};
use crate::rng::{self, tag};

/// Integration step for a given locking bandwidth, leaving a factor two of
/// headroom under the step-size limit.
pub fn sweep_dt(kappa: f64, dt_max: f64) -> f64 {
    if kappa > 0.0 {
        dt_max.min(0.01 / kappa)
    } else {
        dt_max
    }
}

/// Shared settings of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub master: LaserSpec,
    pub injection: InjectionConfig,
    /// Duration simulated per point, s.
    pub window: f64,
    /// Upper bound on the step; the actual step also respects kappa.
    pub dt_max: f64,
    pub seed: u64,
}

impl SweepSpec {
    fn dt(&self) -> f64 {
        sweep_dt(locking_bandwidth(&self.injection), self.dt_max)
    }

    /// Lock report with the slave detuned by `detuning` from the master.
    /// `index` selects the random substreams.
    pub fn point(&self, detuning: f64, index: u64) -> Result<LockReport> {
        let dt = self.dt();
        let n = (self.window / dt).round() as usize;
        let grid = SimGrid::new(dt, n, rng::derive_seed(self.seed, tag::SWEEP, index))?;
        let master = laser_field(&self.master, &grid.reseeded(tag::MASTER_PHASE, 0))?;
        let mut cfg = self.injection;
        cfg.slave_spec.nu_offset = self.master.nu_offset + detuning;
        let (_, report) = simulate_slave(&master, &cfg, &grid.reseeded(tag::SLAVE_NOISE, 0))?;
        Ok(report)
    }
}

/// Lock reports at each detuning.
pub fn detuning_sweep(spec: &SweepSpec, detunings: &[f64], exec: Exec) -> Result<Vec<LockReport>> {
    exec.map(detunings.len(), |i| spec.point(detunings[i], i as u64))
        .into_iter()
        .collect()
}

/// Largest detuning of a sweep (sorted by increasing |detuning|) below which
/// every point locked. Zero if the first point did not lock.
pub fn max_locked_detuning(reports: &[LockReport]) -> f64 {
    reports
        .iter()
        .take_while(|r| r.locked)
        .last()
        .map_or(0.0, |r| r.detuning.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthScan {
    /// Points from zero detuning up to and including the first unlocked one.
    pub detunings: Vec<f64>,
    pub reports: Vec<LockReport>,
    pub measured: f64,
    pub predicted: f64,
}

/// Step the detuning up from zero until lock is lost. Points are evaluated
/// in batches so the scan parallelizes; batches past the edge are dropped.
pub fn measure_bandwidth(spec: &SweepSpec, step: f64, exec: Exec) -> Result<BandwidthScan> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("sweep step must be > 0, got {step}")));
    }
    let predicted = locking_bandwidth(&spec.injection);
    let limit = ((2.0 * predicted + step) / step).ceil() as usize + 1;
    const BATCH: usize = 16;
    let mut detunings = Vec::new();
    let mut reports = Vec::new();
    let mut first = 0usize;
    'scan: while first < limit {
        let batch: Vec<f64> = (first..(first + BATCH).min(limit)).map(|i| i as f64 * step).collect();
        let out = exec.map(batch.len(), |j| spec.point(batch[j], (first + j) as u64));
        for (d, r) in batch.iter().zip(out) {
            let r = r?;
            detunings.push(*d);
            reports.push(r);
            if !r.locked {
                break 'scan;
            }
        }
        first += BATCH;
    }
    let measured = max_locked_detuning(&reports);
    Ok(BandwidthScan {
        detunings,
        reports,
        measured,
        predicted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftWindow {
    /// Window start within the drift run, s.
    pub time: f64,
    /// Free-running slave detuning during the window, Hz.
    pub detuning: f64,
    pub report: LockReport,
}

/// Lock state on a coarse grid of short windows across a long drift run.
/// The detuning follows `drift` from `initial_detuning`; inside each window
/// it is held constant, since the drift over a window is negligible.
pub fn drift_retention(
    spec: &SweepSpec,
    drift: &DriftModel,
    initial_detuning: f64,
    duration: f64,
    windows: usize,
    exec: Exec,
) -> Result<Vec<DriftWindow>> {
    drift.validate()?;
    if windows == 0 || !(duration > 0.0) {
        return Err(Error::Domain("drift run needs a positive duration and at least one window".into()));
    }
    let times: Vec<f64> = (0..windows)
        .map(|w| {
            if windows == 1 {
                0.0
            } else {
                duration * w as f64 / (windows - 1) as f64
            }
        })
        .collect();
    let mut rng = rng::substream(spec.seed, tag::DRIFT, 0);
    let path = drift.sample_path(&times, &mut rng);
    let reports = exec.map(windows, |w| spec.point(initial_detuning + path[w], w as u64));
    times
        .iter()
        .zip(&path)
        .zip(reports)
        .map(|((&time, &offset), r)| {
            Ok(DriftWindow {
                time,
                detuning: initial_detuning + offset,
                report: r?,
            })
        })
        .collect()
}

/// Fraction of windows that stayed locked.
pub fn retention(windows: &[DriftWindow]) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    windows.iter().filter(|w| w.report.locked).count() as f64 / windows.len() as f64
}
