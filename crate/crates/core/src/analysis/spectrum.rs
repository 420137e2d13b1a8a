//! Segment-averaged periodograms and line-width readout.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::phasenoise::FieldTrajectory;

/// One-sided power spectral density on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    /// Equivalent noise bandwidth of the analysis window, Hz.
    pub resolution_bw: f64,
}

/// Bins at and next to DC that carry window leakage of the mean.
const DC_GUARD: usize = 2;

impl Spectrum {
    pub fn bin_spacing(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// True when nothing outside the DC guard rises above rounding noise.
    pub fn is_flat(&self) -> bool {
        let dc = self.psd.first().copied().unwrap_or(0.0);
        let ac = self.psd.iter().skip(DC_GUARD).copied().fold(0.0, f64::max);
        ac <= 1e-20 * dc.max(f64::MIN_POSITIVE)
    }

    /// Index of the highest bin outside the DC guard.
    pub fn peak_index(&self) -> Option<usize> {
        (DC_GUARD.min(self.psd.len())..self.psd.len()).max_by(|&a, &b| self.psd[a].total_cmp(&self.psd[b]))
    }

    /// Frequency of the highest non-DC bin, Hz.
    pub fn peak_frequency(&self) -> Result<f64> {
        self.peak_index().map(|i| self.freqs[i]).ok_or(Error::NoPeak)
    }

    /// Write as `freq_hz,psd` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz,psd\n");
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            s.push_str(&format!("{},{}\n", crate::csv::sci(*f), crate::csv::sci(*p)));
        }
        s
    }
}

/// Welch parameters: Hann window, 50 % overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdConfig {
    pub segment_len: usize,
}

impl PsdConfig {
    /// Segment of at least `20 / expected_fwhm` seconds, rounded up to a
    /// power of two samples.
    pub fn for_expected_fwhm(expected_fwhm: f64, dt: f64) -> Self {
        let min = (20.0 / (expected_fwhm * dt)).ceil().max(16.0) as usize;
        PsdConfig {
            segment_len: min.next_power_of_two(),
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    // Periodic form: a constant input leaks into bins 0 and 1 only.
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided Welch PSD of a real signal sampled every `dt`.
pub fn welch_psd(signal: &[f64], dt: f64, cfg: &PsdConfig) -> Result<Spectrum> {
    let n = cfg.segment_len;
    if n < 4 || signal.len() < n {
        return Err(Error::SpanTooShort(format!(
            "{} samples cannot fill one {n}-sample segment",
            signal.len()
        )));
    }
    let window = hann(n);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / dt;
    let step = n / 2;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let half = n / 2 + 1;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + n <= signal.len() {
        for ((b, x), w) in buf.iter_mut().zip(&signal[start..start + n]).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf[..half]) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * win_power * segments as f64);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let df = fs / n as f64;
    Ok(Spectrum {
        freqs: (0..half).map(|k| k as f64 * df).collect(),
        psd,
        resolution_bw: 1.5 * df,
    })
}

/// Spectrum of the photocurrent `|a(t) + b(t)|^2`.
pub fn beat_psd(a: &FieldTrajectory, b: &FieldTrajectory, cfg: &PsdConfig) -> Result<Spectrum> {
    if !a.grid.same_sampling(&b.grid) {
        return Err(Error::GridMismatch);
    }
    let current: Vec<f64> = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (x + y).norm_sqr())
        .collect();
    welch_psd(&current, a.grid.dt, cfg)
}

/// Interpolated half-maximum crossings on either flank of the highest
/// non-DC peak, Hz.
fn half_max_crossings(spec: &Spectrum) -> Result<(f64, f64)> {
    let k = spec.peak_index().ok_or(Error::NoPeak)?;
    let peak = spec.psd[k];
    let mut floor: Vec<f64> = spec.psd.iter().skip(DC_GUARD).copied().collect();
    floor.sort_by(f64::total_cmp);
    let median = floor[floor.len() / 2];
    if !(peak > 3.0 * median) {
        return Err(Error::NoPeak);
    }
    let half = 0.5 * peak;
    let f = &spec.freqs;
    let p = &spec.psd;

    let mut l = k;
    while l > 0 && p[l] > half {
        l -= 1;
    }
    if p[l] > half {
        return Err(Error::NoPeak);
    }
    let left = f[l] + (half - p[l]) / (p[l + 1] - p[l]) * (f[l + 1] - f[l]);

    let mut r = k;
    while r + 1 < p.len() && p[r] > half {
        r += 1;
    }
    if p[r] > half {
        return Err(Error::NoPeak);
    }
    let right = f[r - 1] + (p[r - 1] - half) / (p[r - 1] - p[r]) * (f[r] - f[r - 1]);
    Ok((left, right))
}

/// Full width at half maximum of the highest non-DC peak, Hz, by linear
/// interpolation of the half-maximum crossing on each flank.
pub fn fwhm(spec: &Spectrum) -> Result<f64> {
    half_max_crossings(spec).map(|(l, r)| r - l)
}

/// Line center as the midpoint of the half-maximum crossings, Hz. Less
/// sensitive to bin noise than the highest bin for lines many bins wide.
pub fn line_center(spec: &Spectrum) -> Result<f64> {
    half_max_crossings(spec).map(|(l, r)| 0.5 * (l + r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::aom_shift;
    use crate::phasenoise::{laser_field, LaserSpec, SimGrid};

    fn synthetic(profile: impl Fn(f64) -> f64, df: f64, n: usize) -> Spectrum {
        let freqs: Vec<f64> = (0..n).map(|k| k as f64 * df).collect();
        Spectrum {
            psd: freqs.iter().map(|&f| profile(f)).collect(),
            freqs,
            resolution_bw: 1.5 * df,
        }
    }

    #[test]
    fn lorentzian_width() {
        let w = 4.5e6;
        let s = synthetic(|f| 1.0 / (1.0 + ((f - 80e6) / (w / 2.0)).powi(2)), 50e3, 4000);
        let got = fwhm(&s).unwrap();
        assert!((got / w - 1.0).abs() < 0.02, "{got}");
        assert!((line_center(&s).unwrap() - 80e6).abs() < 5e3);
    }

    #[test]
    fn gaussian_width() {
        let w = 1e6;
        let sigma = w / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let s = synthetic(|f| (-(f - 30e6).powi(2) / (2.0 * sigma * sigma)).exp(), 20e3, 4000);
        let got = fwhm(&s).unwrap();
        assert!((got / w - 1.0).abs() < 0.02, "{got}");
    }

    #[test]
    fn fwhm_is_scale_invariant() {
        let s = synthetic(|f| 1.0 / (1.0 + ((f - 20e6) / 1e6).powi(2)), 37e3, 3000);
        let mut t = s.clone();
        t.psd.iter_mut().for_each(|p| *p *= 1.7e-9);
        assert_eq!(fwhm(&s).unwrap(), fwhm(&t).unwrap());
    }

    #[test]
    fn flat_spectrum_has_no_peak() {
        let s = synthetic(|_| 1.0, 1e3, 100);
        assert!(matches!(fwhm(&s), Err(Error::NoPeak)));
    }

    #[test]
    fn tone_is_resolution_limited() {
        let grid = SimGrid::new(40e-12, 1 << 18, 1).unwrap();
        let a = laser_field(&LaserSpec::new(0.0, 0.0, 1e-3).unwrap(), &grid).unwrap();
        let b = aom_shift(&a, 80e6).unwrap();
        let cfg = PsdConfig { segment_len: 1 << 15 };
        let s = beat_psd(&a, &b, &cfg).unwrap();
        let peak = s.peak_frequency().unwrap();
        assert!((peak - 80e6).abs() <= s.resolution_bw, "{peak}");
        let w = fwhm(&s).unwrap();
        assert!(w > 0.85 * s.resolution_bw && w < 1.4 * s.resolution_bw, "{w} vs {}", s.resolution_bw);
    }

    #[test]
    fn parseval_for_white_tone() {
        // A pure tone of amplitude A has total power A^2/2.
        let dt = 1e-9;
        let x: Vec<f64> = (0..1 << 16).map(|k| 2.0 * (2.0 * PI * 50e6 * k as f64 * dt).cos()).collect();
        let s = welch_psd(&x, dt, &PsdConfig { segment_len: 4096 }).unwrap();
        let total: f64 = s.psd.iter().sum::<f64>() * s.bin_spacing();
        // Hann window power normalization recovers the mean square.
        assert!((total - 2.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn segment_longer_than_signal() {
        assert!(matches!(
            welch_psd(&[0.0; 100], 1e-9, &PsdConfig { segment_len: 128 }),
            Err(Error::SpanTooShort(_))
        ));
    }

    #[test]
    fn segment_rule() {
        let c = PsdConfig::for_expected_fwhm(10e6, 40e-12);
        assert_eq!(c.segment_len, 65536);
        assert!(c.segment_len as f64 * 40e-12 >= 20.0 / 10e6);
    }
}
