//! Single-photon detection and coincidence correlation.
//!
//! Clicks are an inhomogeneous Poisson process with rate
//! `efficiency * rate_per_watt * I(t) + dark_rate`, drawn sample by sample on
//! the intensity grid. Candidates come from a homogeneous process at the peak
//! rate (geometric skips between candidate samples) and are thinned by
//! `p_k / p_max`, which is equivalent to an independent Bernoulli draw in
//! every sample but costs time proportional to the number of clicks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Largest allowed click probability per sample.
pub const MAX_RATE_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// Hz
    pub dark_rate: f64,
    /// Non-paralyzable dead time, s.
    pub dead_time: f64,
    /// RMS timing jitter, s.
    pub jitter_sigma: f64,
}

impl DetectorSpec {
    pub const IDEAL: DetectorSpec = DetectorSpec {
        efficiency: 1.0,
        dark_rate: 0.0,
        dead_time: 0.0,
        jitter_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !(ok(self.efficiency) && self.efficiency <= 1.0) {
            return Err(Error::Domain(format!(
                "detector efficiency must be in [0, 1], got {}",
                self.efficiency
            )));
        }
        if !(ok(self.dark_rate) && ok(self.dead_time) && ok(self.jitter_sigma)) {
            return Err(Error::Domain(
                "detector dark rate, dead time and jitter must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Typical SNSPD figures.
impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            efficiency: 0.8,
            dark_rate: 100.0,
            dead_time: 50e-9,
            jitter_sigma: 50e-12,
        }
    }
}

/// Sorted detection timestamps (s) within `[0, span]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickStream {
    pub timestamps: Vec<f64>,
    pub span: f64,
}

impl ClickStream {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.timestamps.len() as f64 / self.span
    }
}

/// Per-sample click probabilities for one detector, reusable across many
/// independent click realizations of the same intensity trace.
#[derive(Debug, Clone)]
pub struct ClickSampler {
    prob: Vec<f64>,
    p_max: f64,
    dt: f64,
    det: DetectorSpec,
}

impl ClickSampler {
    pub fn new(intensity: &[f64], dt: f64, det: &DetectorSpec, rate_per_watt: f64) -> Result<Self> {
        det.validate()?;
        if !(rate_per_watt >= 0.0 && rate_per_watt.is_finite()) {
            return Err(Error::Domain(format!(
                "rate_per_watt must be >= 0, got {rate_per_watt}"
            )));
        }
        let scale = det.efficiency * rate_per_watt;
        let mut peak: f64 = 0.0;
        let prob: Vec<f64> = intensity
            .iter()
            .map(|&i| {
                let rate = scale * i.max(0.0) + det.dark_rate;
                peak = peak.max(rate);
                -(-rate * dt).exp_m1()
            })
            .collect();
        if peak * dt > MAX_RATE_DT {
            return Err(Error::RateTooHigh(peak * dt));
        }
        let p_max = prob.iter().copied().fold(0.0, f64::max);
        Ok(ClickSampler {
            prob,
            p_max,
            dt,
            det: *det,
        })
    }

    pub fn span(&self) -> f64 {
        self.prob.len() as f64 * self.dt
    }

    /// Expected click rate before dead time, Hz.
    pub fn mean_rate(&self) -> f64 {
        let n = self.prob.len() as f64;
        self.prob.iter().map(|p| -(-p).ln_1p()).sum::<f64>() / (n * self.dt)
    }

    /// One click realization, seeded.
    pub fn sample(&self, seed: u64) -> ClickStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = self.span();
        let mut times = Vec::new();
        if self.p_max > 0.0 {
            // Candidate samples first, then one gather of their probabilities:
            // the loads are independent, so they overlap instead of each
            // waiting on the last.
            let log_q = (-self.p_max).ln_1p();
            let n = self.prob.len();
            let mut candidates = Vec::new();
            let mut k = 0usize;
            loop {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let skip = if log_q < 0.0 { (u.ln() / log_q).floor() } else { 0.0 };
                if !(skip < (n - k) as f64) {
                    break;
                }
                k += skip as usize;
                candidates.push(k);
                k += 1;
                if k >= n {
                    break;
                }
            }
            let probs: Vec<f64> = candidates.iter().map(|&k| self.prob[k]).collect();
            let mut last = f64::NEG_INFINITY;
            for (&k, &p) in candidates.iter().zip(&probs) {
                if rng.gen::<f64>() * self.p_max < p {
                    let t = (k as f64 + rng.gen::<f64>()) * self.dt;
                    if t - last >= self.det.dead_time {
                        times.push(t);
                        last = t;
                    }
                }
            }
        }
        if self.det.jitter_sigma > 0.0 && !times.is_empty() {
            let jitter = Normal::new(0.0, self.det.jitter_sigma).expect("finite jitter");
            for t in &mut times {
                *t += jitter.sample(&mut rng);
            }
            times.retain(|t| (0.0..=span).contains(t));
            times.sort_by(f64::total_cmp);
        }
        ClickStream {
            timestamps: times,
            span,
        }
    }
}

/// Click stream for one detector watching `intensity` (W) sampled every `dt`.
pub fn clicks_from_intensity(
    intensity: &[f64],
    dt: f64,
    det: &DetectorSpec,
    rate_per_watt: f64,
    seed: u64,
) -> Result<ClickStream> {
    Ok(ClickSampler::new(intensity, dt, det, rate_per_watt)?.sample(seed))
}

/// Raw pair counts of `tau = t2 - t1`, additive across independent
/// acquisitions. Normalization happens once, in [`Self::finish`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceAccumulator {
    pub bin_width: f64,
    pub half_bins: usize,
    pub counts: Vec<u64>,
    pub accumulation_time: f64,
    pub acquisitions: u64,
    /// `max(|tau| - span, 0)` summed over acquisitions shorter than the
    /// histogram reach; zero in the usual case.
    short_deficit: Vec<f64>,
    pub clicks: [u64; 2],
}

impl CoincidenceAccumulator {
    pub fn new(bin_width: f64, max_tau: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::Domain(format!("bin width must be > 0, got {bin_width}")));
        }
        if !(max_tau >= 0.0 && max_tau.is_finite()) {
            return Err(Error::Domain(format!("max_tau must be >= 0, got {max_tau}")));
        }
        let half_bins = (max_tau / bin_width).round() as usize;
        let n = 2 * half_bins + 1;
        Ok(CoincidenceAccumulator {
            bin_width,
            half_bins,
            counts: vec![0; n],
            accumulation_time: 0.0,
            acquisitions: 0,
            short_deficit: vec![0.0; n],
            clicks: [0; 2],
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn tau(&self, bin: usize) -> f64 {
        (bin as f64 - self.half_bins as f64) * self.bin_width
    }

    pub fn total_pairs(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-bin overlap time `sum(max(span - |tau|, 0))` over acquisitions, s.
    pub fn exposure(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|b| {
                self.accumulation_time - self.acquisitions as f64 * self.tau(b).abs()
                    + self.short_deficit[b]
            })
            .collect()
    }

    /// Count every ordered pair within the histogram range.
    pub fn add(&mut self, s1: &ClickStream, s2: &ClickStream) {
        let span = s1.span.min(s2.span);
        if span < self.half_bins as f64 * self.bin_width {
            for b in 0..self.n_bins() {
                self.short_deficit[b] += (self.tau(b).abs() - span).max(0.0);
            }
        }
        self.accumulation_time += span;
        self.acquisitions += 1;
        self.clicks[0] += s1.len() as u64;
        self.clicks[1] += s2.len() as u64;

        let h = self.half_bins as i64;
        let reach = (self.half_bins as f64 + 0.5) * self.bin_width;
        let inv = 1.0 / self.bin_width;
        let t2 = &s2.timestamps;
        let mut lo = 0usize;
        for &t1 in &s1.timestamps {
            while lo < t2.len() && t2[lo] < t1 - reach {
                lo += 1;
            }
            let mut j = lo;
            while j < t2.len() && t2[j] < t1 + reach {
                let idx = ((t2[j] - t1) * inv).round() as i64;
                if (-h..=h).contains(&idx) {
                    self.counts[(idx + h) as usize] += 1;
                }
                j += 1;
            }
        }
    }

    pub fn merge(mut self, other: &CoincidenceAccumulator) -> Self {
        debug_assert_eq!(self.n_bins(), other.n_bins());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.short_deficit.iter_mut().zip(&other.short_deficit) {
            *a += b;
        }
        self.accumulation_time += other.accumulation_time;
        self.acquisitions += other.acquisitions;
        self.clicks[0] += other.clicks[0];
        self.clicks[1] += other.clicks[1];
        self
    }

    /// Normalize by the outer quarter of the delay range.
    pub fn finish(&self) -> Result<CoincidenceHistogram> {
        let n = self.n_bins();
        let taus: Vec<f64> = (0..n).map(|b| self.tau(b)).collect();
        let mut hist = CoincidenceHistogram {
            bin_width: self.bin_width,
            tau: taus,
            raw: self.counts.clone(),
            normalized: vec![0.0; n],
            accumulation_time: self.accumulation_time,
            empty: false,
        };
        if self.clicks[0] == 0 || self.clicks[1] == 0 {
            hist.empty = true;
            return Ok(hist);
        }
        let max_tau = self.half_bins as f64 * self.bin_width;
        let rates: Vec<f64> = self
            .counts
            .iter()
            .zip(&self.exposure())
            .map(|(&c, &e)| if e > 0.0 { c as f64 / e } else { 0.0 })
            .collect();
        let outer: Vec<f64> = rates
            .iter()
            .zip(&hist.tau)
            .filter(|(_, t)| t.abs() >= 0.75 * max_tau - 1e-3 * self.bin_width)
            .map(|(r, _)| *r)
            .collect();
        let baseline = outer.iter().sum::<f64>() / outer.len().max(1) as f64;
        if !(baseline > 0.0) {
            return Err(Error::ZeroBaseline);
        }
        hist.normalized = rates.iter().map(|r| r / baseline).collect();
        Ok(hist)
    }
}

/// Baseline-normalized cross-correlation of two click streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    /// Bin centers, s.
    pub tau: Vec<f64>,
    pub raw: Vec<u64>,
    pub normalized: Vec<f64>,
    pub accumulation_time: f64,
    /// Set when either input stream had no clicks.
    pub empty: bool,
}

impl CoincidenceHistogram {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn max_tau(&self) -> f64 {
        self.tau.last().copied().unwrap_or(0.0)
    }

    pub fn total_pairs(&self) -> u64 {
        self.raw.iter().sum()
    }

    /// Poisson standard error of each normalized value.
    pub fn sigma(&self) -> Vec<f64> {
        self.raw
            .iter()
            .zip(&self.normalized)
            .map(|(&c, &v)| if c > 0 { v / (c as f64).sqrt() } else { f64::INFINITY })
            .collect()
    }

    /// Copy with every float as written by [`CoincidenceHistogram::to_csv`].
    pub fn rounded(&self) -> Self {
        use crate::csv::round6;
        CoincidenceHistogram {
            bin_width: round6(self.bin_width),
            tau: self.tau.iter().map(|&t| round6(t)).collect(),
            raw: self.raw.clone(),
            normalized: self.normalized.iter().map(|&v| round6(v)).collect(),
            accumulation_time: round6(self.accumulation_time),
            empty: self.empty,
        }
    }

    /// Write as `tau_s,raw_count,normalized,sigma` rows.
    pub fn to_csv(&self) -> String {
        let rows = self
            .tau
            .iter()
            .zip(&self.raw)
            .zip(self.normalized.iter().zip(self.sigma()))
            .map(|((&t, &c), (&v, s))| vec![t, c as f64, v, s]);
        crate::csv::table(&["tau_s", "raw_count", "normalized", "sigma"], rows)
    }

    /// Mean normalized value over the outer quarter of the range.
    pub fn baseline(&self) -> f64 {
        let m = 0.75 * self.max_tau() - 1e-3 * self.bin_width;
        let v: Vec<f64> = self
            .tau
            .iter()
            .zip(&self.normalized)
            .filter(|(t, _)| t.abs() >= m)
            .map(|(_, v)| *v)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

/// Full cross-correlation histogram of `t2 - t1` in `[-max_tau, max_tau]`.
pub fn coincidence_histogram(
    s1: &ClickStream,
    s2: &ClickStream,
    bin_width: f64,
    max_tau: f64,
) -> Result<CoincidenceHistogram> {
    let mut acc = CoincidenceAccumulator::new(bin_width, max_tau)?;
    acc.add(s1, s2);
    acc.finish()
}
