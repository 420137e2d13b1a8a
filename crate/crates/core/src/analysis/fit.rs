//! Weighted least-squares fit of the coincidence fringe.
//!
//! Internally delays are in ns and rates in 1/ns so that all four
//! parameters are of order one.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{gamma_from_linewidths, HomModel};
use crate::detect::CoincidenceHistogram;
use crate::error::{Error, Result};

const MIN_BINS: usize = 50;
const MAX_ITER: usize = 200;
const SUB: usize = 8;
const V_MAX: f64 = 0.6;
const GAMMA_MIN: f64 = 1e4;
const GAMMA_MAX: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Starting envelope decay rate, 1/s.
    pub gamma_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gamma_init: gamma_from_linewidths(5e6, 5e6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomFitResult {
    pub model: HomModel,
    /// Standard errors of (visibility, gamma_rate, omega_diff, baseline).
    pub std_errors: [f64; 4],
    /// Weighted residual RMS, i.e. `sqrt(chi2 / dof)`.
    pub residual_rms: f64,
    pub converged: bool,
}

impl HomFitResult {
    /// Rows of `parameter,value,std_error`.
    pub fn to_csv(&self) -> String {
        let m = &self.model;
        let rows = [
            ("visibility", m.visibility),
            ("gamma_rate", m.gamma_rate),
            ("omega_diff", m.omega_diff),
            ("baseline", m.baseline),
        ];
        let mut s = String::from("parameter,value,std_error\n");
        for ((name, v), e) in rows.iter().zip(&self.std_errors) {
            s.push_str(&format!("{name},{},{}\n", crate::csv::sci(*v), crate::csv::sci(*e)));
        }
        s
    }
}

pub fn fit_hom(hist: &CoincidenceHistogram) -> Result<HomFitResult> {
    fit_hom_with(hist, &FitOptions::default())
}

struct Problem {
    tau: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    half_bin: f64,
    lo: [f64; 4],
    hi: [f64; 4],
}

impl Problem {
    /// Bin-averaged model value and its gradient.
    fn eval(&self, t: f64, p: &[f64; 4]) -> (f64, [f64; 4]) {
        let [v, g, om, b] = *p;
        let mut s = 0.0;
        let mut ds_dg = 0.0;
        let mut ds_dw = 0.0;
        for i in 0..SUB {
            let x = t + self.half_bin * (2.0 * (i as f64 + 0.5) / SUB as f64 - 1.0);
            let e = (-g * x.abs()).exp();
            let (sn, cs) = (om * x).sin_cos();
            s += e * cs;
            ds_dg += -x.abs() * e * cs;
            ds_dw += -x * e * sn;
        }
        let k = 1.0 / SUB as f64;
        let (s, ds_dg, ds_dw) = (s * k, ds_dg * k, ds_dw * k);
        let f = b * (1.0 - v * s);
        (f, [-b * s, -b * v * ds_dg, -b * v * ds_dw, 1.0 - v * s])
    }

    fn chi2(&self, p: &[f64; 4]) -> f64 {
        self.tau
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| {
                let r = y - self.eval(t, p).0;
                w * r * r
            })
            .sum()
    }

    /// Normal equations `J^T W J` and `J^T W r`.
    fn normal(&self, p: &[f64; 4]) -> ([[f64; 4]; 4], [f64; 4]) {
        let mut a = [[0.0; 4]; 4];
        let mut g = [0.0; 4];
        for ((&t, &y), &w) in self.tau.iter().zip(&self.y).zip(&self.w) {
            if w == 0.0 {
                continue;
            }
            let (f, d) = self.eval(t, p);
            let r = y - f;
            for i in 0..4 {
                g[i] += w * d[i] * r;
                for j in 0..4 {
                    a[i][j] += w * d[i] * d[j];
                }
            }
        }
        (a, g)
    }

    fn clamp(&self, p: &mut [f64; 4]) {
        for i in 0..4 {
            p[i] = p[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let piv = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if !(a[piv][c].abs() > 1e-300) {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn inverse_diag(a: &[[f64; 4]; 4]) -> [f64; 4] {
    let mut out = [f64::INFINITY; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let mut e = [0.0; 4];
        e[i] = 1.0;
        if let Some(x) = solve4(*a, e) {
            *o = x[i];
        }
    }
    out
}

/// Dominant angular frequency of `1 - normalized`, rad/ns.
fn omega_guess(hist: &CoincidenceHistogram, baseline: f64, bin_ns: f64) -> f64 {
    let n = (4 * hist.len()).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, v) in buf.iter_mut().zip(&hist.normalized) {
        *b = Complex64::new(1.0 - v / baseline, 0.0);
    }
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let k = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(0);
    let shift = if k > 0 && k + 1 < mag.len() {
        let d = mag[k - 1] - 2.0 * mag[k] + mag[k + 1];
        if d != 0.0 {
            0.5 * (mag[k - 1] - mag[k + 1]) / d
        } else {
            0.0
        }
    } else {
        0.0
    };
    2.0 * PI * (k as f64 + shift).max(0.0) / (n as f64 * bin_ns)
}

/// Bounded Levenberg-Marquardt fit of the bin-averaged fringe model.
pub fn fit_hom_with(hist: &CoincidenceHistogram, opts: &FitOptions) -> Result<HomFitResult> {
    if hist.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    if hist.len() < MIN_BINS {
        return Err(Error::Domain(format!(
            "fit needs at least {MIN_BINS} bins, got {}",
            hist.len()
        )));
    }
    let baseline = hist.baseline();
    if !(baseline > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    let bin_ns = hist.bin_width * 1e9;
    let sigma = hist.sigma();
    let problem = Problem {
        tau: hist.tau.iter().map(|t| t * 1e9).collect(),
        y: hist.normalized.clone(),
        w: sigma
            .iter()
            .map(|s| if s.is_finite() && *s > 0.0 { 1.0 / (s * s) } else { 0.0 })
            .collect(),
        half_bin: 0.5 * bin_ns,
        lo: [0.0, GAMMA_MIN * 1e-9, 0.0, 0.0],
        hi: [V_MAX, GAMMA_MAX * 1e-9, PI / bin_ns, f64::INFINITY],
    };
    let used = problem.w.iter().filter(|w| **w > 0.0).count();
    if used <= 4 {
        return Err(Error::EmptyHistogram);
    }

    let centre = hist.len() / 2;
    let mut p = [
        1.0 - hist.normalized[centre] / baseline,
        opts.gamma_init * 1e-9,
        omega_guess(hist, baseline, bin_ns),
        baseline,
    ];
    problem.clamp(&mut p);

    let mut chi = problem.chi2(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (a, g) = problem.normal(&p);
        let mut step_taken = false;
        while lambda < 1e12 {
            let mut damped = a;
            for i in 0..4 {
                damped[i][i] += lambda * a[i][i].max(1e-12);
            }
            let Some(dx) = solve4(damped, g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..4 {
                trial[i] += dx[i];
            }
            problem.clamp(&mut trial);
            let c = problem.chi2(&trial);
            if c <= chi {
                let rel = (chi - c) / chi.max(f64::MIN_POSITIVE);
                p = trial;
                chi = c;
                lambda = (lambda * 0.3).max(1e-12);
                step_taken = true;
                if rel < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !step_taken {
            // No downhill step at any damping: a (possibly bounded) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let dof = (used - 4).max(1) as f64;
    let red = chi / dof;
    let (mut a, _) = problem.normal(&p);
    // A parameter pinned to a bound where the model is flat in it (omega at
    // zero) carries no information; its error is reported as infinite.
    let trace: f64 = (0..4).map(|i| a[i][i]).sum();
    let flat: Vec<bool> = (0..4).map(|i| !(a[i][i] > 1e-12 * trace)).collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += if flat[i] { trace } else { 1e-9 * row[i] };
    }
    let var = inverse_diag(&a);
    let scale = [1.0, 1e9, 1e9, 1.0];
    let mut se = [0.0; 4];
    for i in 0..4 {
        se[i] = if flat[i] {
            f64::INFINITY
        } else {
            (var[i] * red).max(0.0).sqrt() * scale[i]
        };
    }
    Ok(HomFitResult {
        model: HomModel {
            visibility: p[0],
            gamma_rate: p[1] * 1e9,
            omega_diff: p[2] * 1e9,
            baseline: p[3],
        },
        std_errors: se,
        residual_rms: red.sqrt(),
        converged: converged && chi.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::analytic_pcoin_binned;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn synthetic(model: &HomModel, mean_counts: f64, seed: u64) -> CoincidenceHistogram {
        let bin = 0.5e-9;
        let half = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau: Vec<f64> = (0..2 * half + 1).map(|i| (i as f64 - half as f64) * bin).collect();
        let raw: Vec<u64> = tau
            .iter()
            .map(|&t| {
                let mu = mean_counts * analytic_pcoin_binned(t, bin, model);
                Poisson::new(mu).unwrap().sample(&mut rng) as u64
            })
            .collect();
        CoincidenceHistogram {
            bin_width: bin,
            normalized: raw.iter().map(|&c| c as f64 / mean_counts).collect(),
            tau,
            raw,
            accumulation_time: 1.0,
            empty: false,
        }
    }

    #[test]
    fn round_trip_locked() {
        let truth = HomModel {
            visibility: 0.5,
            gamma_rate: PI * 1e7,
            omega_diff: 0.0,
            baseline: 1.0,
        };
        let fit = fit_hom(&synthetic(&truth, 12_000.0, 3)).unwrap();
        assert!(fit.converged);
        assert!((fit.model.visibility - 0.5).abs() < 0.02, "{:?}", fit);
        assert!((fit.model.gamma_rate / truth.gamma_rate - 1.0).abs() < 0.05, "{:?}", fit);
        assert!(fit.model.omega_diff / (2.0 * PI) < 5e6);
    }

    #[test]
    fn round_trip_beating() {
        let truth = HomModel {
            visibility: 0.5,
            gamma_rate: PI * 1e7,
            omega_diff: 2.0 * PI * 153e6,
            baseline: 1.0,
        };
        let fit = fit_hom(&synthetic(&truth, 12_000.0, 4)).unwrap();
        let f = fit.model.omega_diff / (2.0 * PI);
        assert!((f / 153e6 - 1.0).abs() < 0.01, "{f}");
        assert!((fit.model.visibility - 0.5).abs() < 0.02);
    }

    #[test]
    fn flat_histogram_fits_zero_visibility() {
        let truth = HomModel {
            visibility: 0.0,
            gamma_rate: PI * 1e7,
            omega_diff: 0.0,
            baseline: 1.0,
        };
        let fit = fit_hom(&synthetic(&truth, 12_000.0, 5)).unwrap();
        assert!(fit.model.visibility < 0.03, "{:?}", fit);
        assert!(fit.model.visibility <= V_MAX);
    }

    #[test]
    fn too_few_bins() {
        let mut h = synthetic(
            &HomModel {
                visibility: 0.5,
                gamma_rate: PI * 1e7,
                omega_diff: 0.0,
                baseline: 1.0,
            },
            100.0,
            1,
        );
        h.tau.truncate(20);
        h.raw.truncate(20);
        h.normalized.truncate(20);
        assert!(fit_hom(&h).is_err());
    }

    #[test]
    fn solve_small_system() {
        let a = [[4.0, 1.0, 0.0, 0.0], [1.0, 3.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let x = solve4(a, [1.0, 2.0, 4.0, 5.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        assert_eq!(x[2], 2.0);
    }
}
