//! Scanning Fabry-Perot readout of optical line positions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub nu_offset: f64,
    pub power: f64,
    pub linewidth: f64,
}

/// Transmission versus cavity detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTrace {
    pub detuning: Vec<f64>,
    pub transmission: Vec<f64>,
    pub step: f64,
}

impl ScanTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scan_hz,transmission\n");
        for (x, t) in self.detuning.iter().zip(&self.transmission) {
            s.push_str(&format!("{},{}\n", crate::csv::sci(*x), crate::csv::sci(*t)));
        }
        s
    }
}

/// Cavity transmission over `[-scan_range/2, scan_range/2]`.
///
/// Each line contributes a Lorentzian at every cavity order whose width is
/// the cavity FWHM `fsr / finesse` plus the line's own width (Lorentzian
/// convolution), with peak height `power * w_cav / (w_cav + w_line)`.
pub fn fp_scan(
    lines: &[SpectralLine],
    fsr: f64,
    finesse: f64,
    scan_range: f64,
    n_points: usize,
) -> Result<ScanTrace> {
    if !(scan_range > 0.0) {
        return Err(Error::Domain(format!("scan range must be > 0, got {scan_range}")));
    }
    if !(fsr > 0.0) || !(finesse > 1.0) {
        return Err(Error::Domain(format!(
            "cavity needs fsr > 0 and finesse > 1, got {fsr}, {finesse}"
        )));
    }
    if n_points < 2 {
        return Err(Error::Domain("scan needs at least 2 points".into()));
    }
    let w_cav = fsr / finesse;
    let step = scan_range / (n_points - 1) as f64;
    let x0 = -0.5 * scan_range;
    let orders = (scan_range / fsr).ceil() as i64 + 3;
    let detuning: Vec<f64> = (0..n_points).map(|i| x0 + i as f64 * step).collect();
    let transmission = detuning
        .iter()
        .map(|&x| {
            lines
                .iter()
                .map(|l| {
                    let w = w_cav + l.linewidth;
                    let height = l.power * w_cav / w;
                    let hw = 0.5 * w;
                    // Orders near the line; the rest contribute < 1e-6 of a peak.
                    let m0 = ((l.nu_offset - x) / fsr).round() as i64;
                    (m0 - orders..=m0 + orders)
                        .map(|m| {
                            let d = (l.nu_offset - x - m as f64 * fsr) / hw;
                            height / (1.0 + d * d)
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(ScanTrace {
        detuning,
        transmission,
        step,
    })
}

/// Positions of local maxima above `min_fraction` of the global maximum,
/// refined by a parabola through the three highest points.
pub fn scan_peaks(trace: &ScanTrace, min_fraction: f64) -> Vec<f64> {
    let t = &trace.transmission;
    let top = t.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for i in 1..t.len().saturating_sub(1) {
        if t[i] > t[i - 1] && t[i] >= t[i + 1] && t[i] >= min_fraction * top {
            let denom = t[i - 1] - 2.0 * t[i] + t[i + 1];
            let shift = if denom != 0.0 { 0.5 * (t[i - 1] - t[i + 1]) / denom } else { 0.0 };
            peaks.push(trace.detuning[i] + shift * trace.step);
        }
    }
    peaks
}
