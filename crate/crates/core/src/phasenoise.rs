//! Laser phase noise and complex field envelopes.
//!
//! Optical carriers are represented as baseband offsets from a shared
//! reference frequency, so a 1529 nm laser detuned by 153 MHz is sampled as a
//! 153 MHz rotation. The phase performs a Wiener walk whose increments have
//! variance `2*pi*linewidth*dt`, which yields a Lorentzian line of the given
//! FWHM.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;
const SECONDS_PER_HOUR: f64 = 3600.0;

/// Largest allowed phase-diffusion step, in cycles of linewidth per sample.
pub const MAX_LINEWIDTH_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    None,
    Linear,
    RandomWalk,
}

/// Slow center-frequency drift. `magnitude` is in Hz per hour: the ramp slope
/// for [`DriftKind::Linear`], the one-hour RMS excursion for
/// [`DriftKind::RandomWalk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    pub kind: DriftKind,
    pub magnitude: f64,
}

impl DriftModel {
    pub const NONE: DriftModel = DriftModel {
        kind: DriftKind::None,
        magnitude: 0.0,
    };

    pub fn linear(hz_per_hour: f64) -> Self {
        DriftModel {
            kind: DriftKind::Linear,
            magnitude: hz_per_hour,
        }
    }

    pub fn random_walk(hz_per_sqrt_hour: f64) -> Self {
        DriftModel {
            kind: DriftKind::RandomWalk,
            magnitude: hz_per_sqrt_hour,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::Domain(format!(
                "drift magnitude must be finite and >= 0, got {}",
                self.magnitude
            )));
        }
        Ok(())
    }

    /// Frequency offset (Hz) at each of the increasing `times` (s), starting
    /// from zero at t = 0.
    pub fn sample_path<R: Rng + ?Sized>(&self, times: &[f64], rng: &mut R) -> Vec<f64> {
        match self.kind {
            DriftKind::None => vec![0.0; times.len()],
            DriftKind::Linear => times
                .iter()
                .map(|t| self.magnitude * t / SECONDS_PER_HOUR)
                .collect(),
            DriftKind::RandomWalk => {
                let mut f = 0.0;
                let mut last = 0.0;
                times
                    .iter()
                    .map(|&t| {
                        let step = (t - last).max(0.0);
                        let z: f64 = StandardNormal.sample(rng);
                        f += self.magnitude * (step / SECONDS_PER_HOUR).sqrt() * z;
                        last = t;
                        f
                    })
                    .collect()
            }
        }
    }
}

/// One continuous-wave laser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserSpec {
    /// Center frequency as an offset from the simulation reference, Hz.
    pub nu_offset: f64,
    /// Lorentzian linewidth, Hz.
    pub linewidth_fwhm: f64,
    /// Optical power, W.
    pub power: f64,
    pub drift: DriftModel,
}

impl LaserSpec {
    pub fn new(nu_offset: f64, linewidth_fwhm: f64, power: f64) -> Result<Self> {
        let spec = LaserSpec {
            nu_offset,
            linewidth_fwhm,
            power,
            drift: DriftModel::NONE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_drift(mut self, drift: DriftModel) -> Self {
        self.drift = drift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nu_offset.is_finite() {
            return Err(Error::Domain("nu_offset must be finite".into()));
        }
        if !(self.linewidth_fwhm >= 0.0 && self.linewidth_fwhm.is_finite()) {
            return Err(Error::Domain(format!(
                "linewidth must be >= 0, got {}",
                self.linewidth_fwhm
            )));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::Domain(format!("power must be > 0, got {}", self.power)));
        }
        self.drift.validate()
    }
}

/// Uniform time grid shared by every trajectory in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    pub dt: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl SimGrid {
    pub fn new(dt: f64, n_samples: usize, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
        }
        if n_samples < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least 2 samples, got {n_samples}"
            )));
        }
        Ok(SimGrid { dt, n_samples, seed })
    }

    /// Same grid, different random substream.
    pub fn reseeded(self, tag: u64, index: u64) -> Self {
        SimGrid {
            seed: rng::derive_seed(self.seed, tag, index),
            ..self
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn span(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    /// Grids are compatible when they sample the same instants; seeds may differ.
    pub fn same_sampling(&self, other: &SimGrid) -> bool {
        self.dt == other.dt && self.n_samples == other.n_samples
    }
}

/// Complex baseband envelope sampled on a [`SimGrid`]; `|sample|^2` is the
/// instantaneous power in W.
///
/// Samples before `valid_from` are zero padding introduced by a fiber delay:
/// light that has not arrived yet.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    pub grid: SimGrid,
    pub samples: Vec<Complex64>,
    /// Nominal carrier offset, Hz. Bookkeeping only; the samples already
    /// contain the carrier rotation.
    pub nu_offset: f64,
    pub valid_from: usize,
}

impl FieldTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_sqr()).collect()
    }

    pub fn mean_power(&self) -> f64 {
        let valid = &self.samples[self.valid_from..];
        if valid.is_empty() {
            return 0.0;
        }
        valid.iter().map(|s| s.norm_sqr()).sum::<f64>() / valid.len() as f64
    }

    /// Multiply every sample by a real amplitude factor.
    pub fn scaled(mut self, amplitude: f64) -> Self {
        for s in &mut self.samples {
            *s *= amplitude;
        }
        self
    }

    /// Sub-trajectory `[start, start + len)`. The returned grid keeps `dt` and
    /// seed; sample times are re-based to zero.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len < 2 || start + len > self.len() {
            return Err(Error::SpanTooShort(format!(
                "window [{start}, {}) outside trajectory of {} samples",
                start + len,
                self.len()
            )));
        }
        // Re-basing time would change the carrier phase bookkeeping by a
        // constant only, which no observable depends on.
        Ok(FieldTrajectory {
            grid: SimGrid {
                n_samples: len,
                ..self.grid
            },
            samples: self.samples[start..start + len].to_vec(),
            nu_offset: self.nu_offset,
            valid_from: self.valid_from.saturating_sub(start).min(len),
        })
    }

    /// Continuous phase of the samples after removing the nominal carrier,
    /// i.e. `arg(sample * exp(-i 2 pi nu t))` unwrapped along the trajectory.
    pub fn residual_phase(&self) -> Vec<f64> {
        unwrap_phase(self.samples.iter().enumerate().map(|(k, s)| {
            let carrier = TAU * self.nu_offset * self.grid.time(k);
            s.arg() - carrier
        }))
    }
}

/// Unwrap a phase sequence so consecutive values differ by less than pi.
pub fn unwrap_phase(raw: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out = Vec::new();
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for p in raw {
        if let Some(q) = prev {
            let mut d = p + offset - q;
            // Carrier subtraction can move p by many turns; fold it back.
            let turns = (d / TAU).round();
            offset -= turns * TAU;
            d -= turns * TAU;
            out.push(q + d);
            prev = Some(q + d);
        } else {
            out.push(p);
            prev = Some(p);
        }
    }
    out
}

/// Wiener phase trajectory of one laser on `grid`, seeded from `grid.seed`.
///
/// `phase[0]` is uniform in `[0, 2*pi)`; increments are Gaussian with
/// variance `2*pi*linewidth*dt` plus the drift ramp `2*pi*f_drift(t)*dt`.
/// The carrier `nu_offset` is not included.
pub fn gen_phase_trajectory(spec: &LaserSpec, grid: &SimGrid) -> Result<Vec<f64>> {
    spec.validate()?;
    let step_cycles = spec.linewidth_fwhm * grid.dt;
    if step_cycles > MAX_LINEWIDTH_DT {
        return Err(Error::GridTooCoarse(format!(
            "linewidth*dt = {step_cycles:.3e} cycles exceeds {MAX_LINEWIDTH_DT}; reduce dt"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let sigma = (TAU * spec.linewidth_fwhm * grid.dt).sqrt();
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");

    let mut drift_rng = rng::substream(grid.seed, rng::tag::DRIFT, 0);
    let drift_step = spec.drift.magnitude * (grid.dt / SECONDS_PER_HOUR).sqrt();
    let ramp = spec.drift.magnitude / SECONDS_PER_HOUR;

    let mut phases = Vec::with_capacity(grid.n_samples);
    let mut phi = rng.gen::<f64>() * TAU;
    let mut f_walk = 0.0;
    phases.push(phi);
    for k in 0..grid.n_samples - 1 {
        let f_drift = match spec.drift.kind {
            DriftKind::None => 0.0,
            // Midpoint of the step keeps the quadratic phase exact.
            DriftKind::Linear => ramp * (grid.time(k) + 0.5 * grid.dt),
            DriftKind::RandomWalk => {
                let z: f64 = StandardNormal.sample(&mut drift_rng);
                let f = f_walk;
                f_walk += drift_step * z;
                f
            }
        };
        let dphi = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        phi += dphi + TAU * f_drift * grid.dt;
        phases.push(phi);
    }
    Ok(phases)
}

/// Field samples `sqrt(P) * exp(i (2 pi nu t_k + phi_k))`.
pub fn field_from_phase(spec: &LaserSpec, grid: &SimGrid, phases: &[f64]) -> Result<FieldTrajectory> {
    if phases.len() != grid.n_samples {
        return Err(Error::LengthMismatch {
            expected: grid.n_samples,
            got: phases.len(),
        });
    }
    let amp = spec.power.sqrt();
    let samples = phases
        .iter()
        .enumerate()
        .map(|(k, &phi)| Complex64::from_polar(amp, TAU * spec.nu_offset * grid.time(k) + phi))
        .collect();
    Ok(FieldTrajectory {
        grid: *grid,
        samples,
        nu_offset: spec.nu_offset,
        valid_from: 0,
    })
}

/// Convenience: phase trajectory followed by [`field_from_phase`].
pub fn laser_field(spec: &LaserSpec, grid: &SimGrid) -> Result<FieldTrajectory> {
    let phases = gen_phase_trajectory(spec, grid)?;
    field_from_phase(spec, grid, &phases)
}

/// Coherence length `c / linewidth`, m.
pub fn coherence_length(linewidth_fwhm: f64) -> Result<f64> {
    if !(linewidth_fwhm > 0.0) {
        return Err(Error::Domain(format!(
            "coherence length needs a positive linewidth, got {linewidth_fwhm}"
        )));
    }
    Ok(SPEED_OF_LIGHT / linewidth_fwhm)
}

/// Coherence time `1 / (pi * linewidth)` of a Lorentzian line, s.
pub fn coherence_time(linewidth_fwhm: f64) -> f64 {
    1.0 / (PI * linewidth_fwhm)
}
