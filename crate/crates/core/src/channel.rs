//! Passive optics: fiber links, AOM frequency shift and the 50:50 beam
//! splitter.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phasenoise::{FieldTrajectory, SPEED_OF_LIGHT};

/// Single-mode fiber span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberSpec {
    /// km
    pub length: f64,
    /// dB/km
    pub attenuation: f64,
    pub group_index: f64,
}

impl FiberSpec {
    pub const SMF_ATTENUATION: f64 = 0.2;
    pub const SMF_GROUP_INDEX: f64 = 1.468;

    /// Standard SMF-28-like fiber of the given length in km.
    pub fn smf(length_km: f64) -> Self {
        FiberSpec {
            length: length_km,
            attenuation: Self::SMF_ATTENUATION,
            group_index: Self::SMF_GROUP_INDEX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return Err(Error::Domain(format!("fiber length must be >= 0, got {}", self.length)));
        }
        if !(self.attenuation >= 0.0 && self.attenuation.is_finite()) {
            return Err(Error::Domain(format!(
                "fiber attenuation must be >= 0, got {}",
                self.attenuation
            )));
        }
        if !(self.group_index >= 1.0 && self.group_index.is_finite()) {
            return Err(Error::Domain(format!(
                "group index must be >= 1, got {}",
                self.group_index
            )));
        }
        Ok(())
    }

    /// Group delay, s.
    pub fn delay(&self) -> f64 {
        self.length * 1e3 * self.group_index / SPEED_OF_LIGHT
    }

    /// Power transmission `10^(-alpha L / 10)`.
    pub fn power_transmission(&self) -> f64 {
        10f64.powf(-self.attenuation * self.length / 10.0)
    }

    /// Delay rounded to the nearest whole sample.
    pub fn delay_samples(&self, dt: f64) -> usize {
        (self.delay() / dt).round() as usize
    }
}

/// Delay and attenuate a field through `fiber`. The leading `delay` samples
/// become zero padding and `valid_from` moves accordingly.
pub fn propagate(field: &FieldTrajectory, fiber: &FiberSpec) -> Result<FieldTrajectory> {
    fiber.validate()?;
    let n = field.len();
    let d = fiber.delay_samples(field.grid.dt);
    if d >= n {
        return Err(Error::DelayExceedsSpan { delay: d, span: n });
    }
    let amp = fiber.power_transmission().sqrt();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for (dst, src) in samples[d..].iter_mut().zip(&field.samples[..n - d]) {
        *dst = src * amp;
    }
    Ok(FieldTrajectory {
        grid: field.grid,
        samples,
        nu_offset: field.nu_offset,
        valid_from: (field.valid_from + d).min(n),
    })
}

/// Largest AOM shift per sample, in cycles.
pub const MAX_SHIFT_DT: f64 = 0.02;

/// Frequency-shift a field by `f_shift` Hz.
pub fn aom_shift(field: &FieldTrajectory, f_shift: f64) -> Result<FieldTrajectory> {
    let cycles = f_shift.abs() * field.grid.dt;
    if cycles >= MAX_SHIFT_DT {
        return Err(Error::Config(format!(
            "AOM shift {f_shift} Hz is {cycles:.3e} cycles per sample (limit {MAX_SHIFT_DT}); reduce dt"
        )));
    }
    let samples = field
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| s * Complex64::from_polar(1.0, TAU * f_shift * field.grid.time(k)))
        .collect();
    Ok(FieldTrajectory {
        grid: field.grid,
        samples,
        nu_offset: field.nu_offset + f_shift,
        valid_from: field.valid_from,
    })
}

/// Output of the 50:50 beam splitter.
///
/// `out1`/`out2` hold the coherent sums of the co-polarized parts.
/// `orthogonal` is the intensity of the cross-polarized part of input `b`,
/// which reaches each output without interfering.
#[derive(Debug, Clone)]
pub struct BsPorts {
    pub out1: FieldTrajectory,
    pub out2: FieldTrajectory,
    pub orthogonal: Vec<f64>,
}

impl BsPorts {
    pub fn intensity1(&self) -> Vec<f64> {
        self.out1
            .samples
            .iter()
            .zip(&self.orthogonal)
            .map(|(s, o)| s.norm_sqr() + o)
            .collect()
    }

    pub fn intensity2(&self) -> Vec<f64> {
        self.out2
            .samples
            .iter()
            .zip(&self.orthogonal)
            .map(|(s, o)| s.norm_sqr() + o)
            .collect()
    }
}

/// Combine `a` and `b` on a lossless 50:50 splitter with scalar polarization
/// overlap `pol_overlap` in `[0, 1]`.
pub fn beamsplitter(a: &FieldTrajectory, b: &FieldTrajectory, pol_overlap: f64) -> Result<BsPorts> {
    if !a.grid.same_sampling(&b.grid) {
        return Err(Error::GridMismatch);
    }
    if !(0.0..=1.0).contains(&pol_overlap) {
        return Err(Error::Domain(format!(
            "polarization overlap must be in [0, 1], got {pol_overlap}"
        )));
    }
    let s = pol_overlap;
    let cross = 0.5 * (1.0 - s * s);
    let n = a.len();
    let mut o1 = Vec::with_capacity(n);
    let mut o2 = Vec::with_capacity(n);
    let mut orth = Vec::with_capacity(n);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        let yp = y * s;
        o1.push((x + yp) * FRAC_1_SQRT_2);
        o2.push((x - yp) * FRAC_1_SQRT_2);
        orth.push(cross * y.norm_sqr());
    }
    let valid_from = a.valid_from.max(b.valid_from);
    let out = |samples| FieldTrajectory {
        grid: a.grid,
        samples,
        nu_offset: a.nu_offset,
        valid_from,
    };
    Ok(BsPorts {
        out1: out(o1),
        out2: out(o2),
        orthogonal: orth,
    })
}
