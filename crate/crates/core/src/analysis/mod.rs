//! Coincidence-fringe model, fringe fitting, beat spectra and cavity scans.

mod cavity;
mod fit;
mod spectrum;

pub use cavity::{fp_scan, scan_peaks, ScanTrace, SpectralLine};
pub use fit::{fit_hom, fit_hom_with, FitOptions, HomFitResult};
pub use spectrum::{beat_psd, fwhm, line_center, welch_psd, PsdConfig, Spectrum};

use std::f64::consts::PI;

use crate::detect::CoincidenceHistogram;
use crate::error::{Error, Result};

/// Two-photon coincidence model
/// `P(tau) = baseline * (1 - V * exp(-gamma_rate*|tau|) * cos(omega_diff*tau))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomModel {
    pub visibility: f64,
    /// Mutual-coherence decay rate, 1/s.
    pub gamma_rate: f64,
    /// rad/s
    pub omega_diff: f64,
    pub baseline: f64,
}

impl HomModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.visibility >= 0.0) || !(self.gamma_rate > 0.0) || !(self.baseline > 0.0) {
            return Err(Error::Domain(format!("invalid HOM model {self:?}")));
        }
        Ok(())
    }
}

/// Normalized coincidence probability at delay `tau`.
pub fn analytic_pcoin(tau: f64, model: &HomModel) -> f64 {
    let envelope = (-model.gamma_rate * tau.abs()).exp();
    model.baseline * (1.0 - model.visibility * envelope * (model.omega_diff * tau).cos())
}

/// [`analytic_pcoin`] averaged over a histogram bin of width `bin_width`
/// centred on `tau`.
pub fn analytic_pcoin_binned(tau: f64, bin_width: f64, model: &HomModel) -> f64 {
    const SUB: usize = 32;
    (0..SUB)
        .map(|i| {
            let x = tau + bin_width * ((i as f64 + 0.5) / SUB as f64 - 0.5);
            analytic_pcoin(x, model)
        })
        .sum::<f64>()
        / SUB as f64
}

/// Mutual-coherence decay rate of two Lorentzian lines, `pi * (dnu_a + dnu_b)`.
pub fn gamma_from_linewidths(dnu_a: f64, dnu_b: f64) -> f64 {
    PI * (dnu_a + dnu_b)
}

/// Ideal visibility of two independent coherent CW beams: 1/2, reduced by
/// polarization overlap `s` (factor `s^2`) and arm intensity ratio `r`
/// (factor `2 sqrt(r) / (1 + r)`).
pub fn expected_visibility(pol_overlap: f64, intensity_ratio: f64) -> f64 {
    let r = intensity_ratio;
    0.5 * pol_overlap * pol_overlap * 2.0 * r.sqrt() / (1.0 + r)
}

/// Dip depth `1 - min / baseline` over the central region
/// `|tau| <= 3 / gamma`, with `gamma` estimated from the fringe envelope.
pub fn visibility(hist: &CoincidenceHistogram) -> Result<f64> {
    if hist.is_empty() || hist.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let baseline = hist.baseline();
    if !(baseline > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    let reach = match envelope_decay_rate(hist, baseline) {
        Some(g) => 3.0 / g,
        None => f64::INFINITY,
    };
    let min = hist
        .tau
        .iter()
        .zip(&hist.normalized)
        .filter(|(t, _)| t.abs() <= reach)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    Ok(1.0 - min / baseline)
}

/// Envelope decay rate from the first delay at which the smoothed
/// `|value - baseline|` falls below 1/e of its central value.
fn envelope_decay_rate(hist: &CoincidenceHistogram, baseline: f64) -> Option<f64> {
    const HALF_WINDOW: usize = 4;
    let n = hist.len();
    let dev: Vec<f64> = hist.normalized.iter().map(|v| (v - baseline).abs()).collect();
    let smooth = |i: usize| {
        let lo = i.saturating_sub(HALF_WINDOW);
        let hi = (i + HALF_WINDOW + 1).min(n);
        dev[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
    };
    let centre = n / 2;
    let d0 = smooth(centre);
    if !(d0 > 0.0) {
        return None;
    }
    let threshold = d0 / std::f64::consts::E;
    (centre..n)
        .find(|&i| smooth(i) < threshold && i > centre)
        .map(|i| 1.0 / hist.tau[i].abs())
}
