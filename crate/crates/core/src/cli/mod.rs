//! Scenario runner behind the `sim` binary.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{parse_config, Entries, Scenario, ScenarioConfig, SweepAxis};

use crate::analysis::{
    self, fit_hom_with, fp_scan, scan_peaks, FitOptions, PsdConfig, SpectralLine,
};
use crate::channel::{aom_shift, propagate};
use crate::csv::{round6, sci, table};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hom::{auto_dt, run_hom, BobMode, HomSetup};
use crate::injection::{
    calibrate_kappa, locking_bandwidth, predicted_beat_fwhm, simulate_slave, BandwidthPoint, InjectionConfig,
};
use crate::lockband::{drift_retention, measure_bandwidth, retention, SweepSpec};
use crate::phasenoise::{laser_field, LaserSpec, SimGrid};
use crate::rng::tag;

/// Default field duration of the coincidence scenarios, s.
const HOM_SPAN: f64 = 500e-6;
/// Default field duration of the beat scenario, s.
const BEAT_SPAN: f64 = 1e-3;
/// Step bound for the lock sweeps, s.
const SWEEP_DT_MAX: f64 = 0.1e-9;
/// Arm power used to form the beat photocurrent, W.
const BEAT_ARM_POWER: f64 = 1e-3;

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub seed: u64,
    /// Named scalar results, in emission order.
    pub metrics: Vec<(String, f64)>,
    /// Wall-clock duration, s. Reported on stdout only, so reruns produce
    /// identical files.
    pub wall_time: f64,
    pub artifacts: Vec<PathBuf>,
    pub config_echo: Vec<(String, String)>,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            s.push_str(&format!("{k},{}\n", sci(*v)));
        }
        s
    }

    /// Human-readable report for stdout.
    pub fn report(&self) -> String {
        let mut s = format!("scenario: {}\nseed: {}\n", self.scenario.name(), self.seed);
        s.push_str("config:\n");
        for (k, v) in &self.config_echo {
            s.push_str(&format!("  {k} = {v}\n"));
        }
        s.push_str("metrics:\n");
        for (k, v) in &self.metrics {
            s.push_str(&format!("  {k} = {}\n", sci(*v)));
        }
        s.push_str("artifacts:\n");
        for a in &self.artifacts {
            s.push_str(&format!("  {}\n", a.display()));
        }
        s.push_str(&format!("wall time: {:.3} s\n", self.wall_time));
        s
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    artifacts: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(path);
        Ok(())
    }
}

struct Metrics(Vec<(String, f64)>);

impl Metrics {
    fn push(&mut self, name: &str, value: f64) {
        self.0.push((name.to_string(), round6(value)));
    }

    fn flag(&mut self, name: &str, value: bool) {
        self.push(name, if value { 1.0 } else { 0.0 });
    }
}

/// `K` from the configured coefficient, or from the anchor point.
pub fn kappa_coeff(cfg: &ScenarioConfig) -> Result<f64> {
    match cfg.kappa_coeff {
        Some(k) => Ok(k),
        None => calibrate_kappa(&[BandwidthPoint {
            injection_power: cfg.anchor_injection_power,
            slave_power: cfg.slave_power,
            bandwidth: cfg.anchor_bandwidth,
        }]),
    }
}

fn injection_config(cfg: &ScenarioConfig, injection_power: f64, detuning: f64) -> Result<InjectionConfig> {
    Ok(InjectionConfig {
        injection_power,
        slave_power: cfg.slave_power,
        kappa_coeff: kappa_coeff(cfg)?,
        slave_spec: LaserSpec::new(detuning, cfg.bob_linewidth, cfg.slave_power)?,
        slave_noise_factor: cfg.slave_noise_factor,
    })
}

/// Alice's laser, with the launch power that delivers the configured
/// injection power through the OIL fiber.
fn master_spec(cfg: &ScenarioConfig) -> Result<LaserSpec> {
    let launch = cfg.injection_power / cfg.oil.power_transmission();
    LaserSpec::new(0.0, cfg.alice_linewidth, if launch > 0.0 { launch } else { 1e-3 })
}

/// Coincidence setup for the `hom-locked` / `hom-unlocked` scenarios.
pub fn hom_setup(cfg: &ScenarioConfig, locked: bool) -> Result<HomSetup> {
    let inj = injection_config(cfg, cfg.injection_power, cfg.detuning)?;
    let kappa = locking_bandwidth(&inj);
    let f_max = if locked { kappa.max(cfg.detuning.abs()) } else { cfg.detuning.abs() };
    let f_max = f_max.max(cfg.alice_linewidth).max(cfg.bob_linewidth);
    Ok(HomSetup {
        master: master_spec(cfg)?,
        bob: inj.slave_spec,
        mode: if locked { BobMode::Locked(inj) } else { BobMode::FreeRunning },
        oil: cfg.oil,
        bob_link: cfg.link,
        alice_link: cfg.alice_link,
        pol_overlap: cfg.pol_overlap,
        arm_power_ratio: cfg.arm_power_ratio,
        detectors: [cfg.detector; 2],
        click_rate: cfg.click_rate,
        dt: cfg.dt.unwrap_or_else(|| auto_dt(cfg.bin_width, f_max)),
        window: cfg.span.unwrap_or(HOM_SPAN),
        settle: cfg.settle,
        bin_width: cfg.bin_width,
        max_tau: cfg.max_tau,
        pair_budget: cfg.pair_budget,
        trials: cfg.trials,
        seed: cfg.seed,
    })
}

/// Noise-free sweep settings at `injection_power`. Phase noise is switched
/// off so the measured edge is the deterministic locking range rather than
/// the onset of noise-driven phase slips.
pub fn lock_sweep_spec(cfg: &ScenarioConfig, injection_power: f64, window: f64, noisy: bool) -> Result<SweepSpec> {
    let mut inj = injection_config(cfg, injection_power, 0.0)?;
    let mut master = master_spec(cfg)?;
    if !noisy {
        inj.slave_spec.linewidth_fwhm = 0.0;
        master.linewidth_fwhm = 0.0;
    }
    Ok(SweepSpec {
        master,
        injection: inj,
        window,
        dt_max: cfg.dt.unwrap_or(SWEEP_DT_MAX),
        seed: cfg.seed,
    })
}

/// Run `cfg` and write its artifacts into `out`, which is created if needed.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, exec: Exec) -> Result<RunSummary> {
    let clock = Instant::now();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Outputs {
        dir: out,
        artifacts: Vec::new(),
    };
    let mut m = Metrics(Vec::new());
    match cfg.scenario {
        Scenario::Beat => beat(cfg, &mut files, &mut m)?,
        Scenario::Lockband => lockband(cfg, &mut files, &mut m, exec)?,
        Scenario::HomLocked => hom(cfg, true, &mut files, &mut m, exec)?,
        Scenario::HomUnlocked => hom(cfg, false, &mut files, &mut m, exec)?,
        Scenario::Drift => drift(cfg, &mut files, &mut m, exec)?,
        Scenario::Sweep => sweep(cfg, &mut files, &mut m, exec)?,
    }
    m.push("seed", cfg.seed as f64);
    let mut summary = RunSummary {
        scenario: cfg.scenario,
        seed: cfg.seed,
        metrics: m.0,
        wall_time: 0.0,
        artifacts: Vec::new(),
        config_echo: cfg.echo.clone(),
    };
    files.write("config.txt", &cfg.echo_text())?;
    files.write("summary.csv", &summary.to_csv())?;
    summary.artifacts = files.artifacts;
    summary.wall_time = clock.elapsed().as_secs_f64();
    Ok(summary)
}

fn beat(cfg: &ScenarioConfig, files: &mut Outputs, m: &mut Metrics) -> Result<()> {
    let inj = injection_config(cfg, cfg.injection_power, cfg.detuning)?;
    let kappa = locking_bandwidth(&inj);
    let f_max = kappa
        .max(cfg.detuning.abs())
        .max(cfg.aom_shift.abs())
        .max(cfg.alice_linewidth)
        .max(cfg.bob_linewidth);
    let dt = cfg.dt.unwrap_or_else(|| auto_dt(cfg.bin_width, f_max));
    let master = master_spec(cfg)?;
    let d_oil = cfg.oil.delay_samples(dt);
    let settle = (cfg.settle / dt).ceil() as usize;
    let u = (cfg.span.unwrap_or(BEAT_SPAN) / dt).round() as usize;
    let n = d_oil + settle + u;

    let grid = SimGrid::new(dt, n, cfg.seed)?;
    let field = laser_field(&master, &grid.reseeded(tag::MASTER_PHASE, 0))?;
    let injected = propagate(&field, &cfg.oil)?.window(d_oil, settle + u)?;
    let slave_grid = SimGrid::new(dt, settle + u, cfg.seed)?.reseeded(tag::SLAVE_NOISE, 0);
    let (slave, report) = simulate_slave(&injected, &inj, &slave_grid)?;
    drop(injected);
    let slave = slave.window(settle, u)?;
    let reference = aom_shift(&field.window(d_oil + settle, u)?, cfg.aom_shift)?;
    drop(field);
    let a = reference.scaled((BEAT_ARM_POWER / master.power).sqrt());
    let b = slave.scaled((BEAT_ARM_POWER / cfg.slave_power).sqrt());

    let predicted = predicted_beat_fwhm(cfg.alice_linewidth, &inj, report.locked);
    let psd = PsdConfig::for_expected_fwhm(predicted.max(1.0 / (u as f64 * dt)), dt);
    let mut spectrum = analysis::beat_psd(&a, &b, &psd)?;
    spectrum.freqs.iter_mut().for_each(|f| *f = round6(*f));
    spectrum.psd.iter_mut().for_each(|p| *p = round6(*p));
    files.write("spectrum.csv", &spectrum.to_csv())?;

    let (center, width) = if spectrum.is_flat() {
        (0.0, 0.0)
    } else {
        (analysis::line_center(&spectrum)?, analysis::fwhm(&spectrum)?)
    };
    m.flag("locked", report.locked);
    m.push("locking_bandwidth_hz", kappa);
    m.push("mean_freq_error_hz", report.mean_freq_error);
    m.push("beat_center_hz", center);
    m.push("beat_fwhm_hz", width);
    m.push("predicted_fwhm_hz", predicted);
    m.push("resolution_bw_hz", spectrum.resolution_bw);
    m.push("aom_shift_hz", cfg.aom_shift);
    m.push("dt_s", dt);
    Ok(())
}

/// Offset of the strongest cavity peak from `center`, wrapped into one FSR.
fn peak_near(lines: &[SpectralLine], cfg: &ScenarioConfig, center: f64) -> Result<(f64, f64)> {
    let trace = fp_scan(lines, cfg.fsr, cfg.finesse, cfg.fsr, cfg.scan_points)?;
    let wrap = |x: f64| x - cfg.fsr * (x / cfg.fsr).round();
    let peak = scan_peaks(&trace, 0.5)
        .into_iter()
        .min_by(|a, b| wrap(a - center).abs().total_cmp(&wrap(b - center).abs()))
        .ok_or(Error::NoPeak)?;
    Ok((wrap(peak), trace.step))
}

fn lockband(cfg: &ScenarioConfig, files: &mut Outputs, m: &mut Metrics, exec: Exec) -> Result<()> {
    let spec = lock_sweep_spec(cfg, cfg.injection_power, cfg.lockband_window, false)?;
    let scan = measure_bandwidth(&spec, cfg.lockband_step, exec)?;
    let rows = scan
        .detunings
        .iter()
        .zip(&scan.reports)
        .map(|(d, r)| vec![*d, if r.locked { 1.0 } else { 0.0 }, r.mean_freq_error]);
    files.write("lockband.csv", &table(&["detuning_hz", "locked", "mean_freq_error_hz"], rows))?;

    let mut power_rows = Vec::new();
    for &p in &cfg.lockband_powers {
        let s = lock_sweep_spec(cfg, p, cfg.lockband_window, false)?;
        let b = measure_bandwidth(&s, cfg.lockband_step, exec)?;
        power_rows.push(vec![p, b.predicted, b.measured]);
    }
    files.write(
        "power_sweep.csv",
        &table(&["injection_power_w", "predicted_hz", "measured_hz"], power_rows),
    )?;

    // Probe: a slave detuned by the probe offset, read out on the cavity
    // before and after injection.
    let probe = spec.point(cfg.probe_detuning, u64::MAX)?;
    let master_line = SpectralLine {
        nu_offset: 0.0,
        power: 1.0,
        linewidth: cfg.alice_linewidth,
    };
    let slave_line = |nu: f64| SpectralLine {
        nu_offset: nu,
        power: 1.0,
        linewidth: cfg.bob_linewidth,
    };
    let (master_peak, step) = peak_near(&[master_line], cfg, 0.0)?;
    let (free_peak, _) = peak_near(&[slave_line(cfg.probe_detuning)], cfg, cfg.probe_detuning)?;
    let locked_nu = if probe.locked { probe.mean_freq_error } else { cfg.probe_detuning + probe.mean_freq_error };
    let (locked_peak, _) = peak_near(&[slave_line(locked_nu)], cfg, locked_nu)?;
    let both = fp_scan(&[master_line, slave_line(cfg.probe_detuning)], cfg.fsr, cfg.finesse, cfg.fsr, cfg.scan_points)?;
    let after = fp_scan(&[master_line, slave_line(locked_nu)], cfg.fsr, cfg.finesse, cfg.fsr, cfg.scan_points)?;
    let rows = both
        .detuning
        .iter()
        .zip(both.transmission.iter().zip(&after.transmission))
        .map(|(x, (a, b))| vec![*x, *a, *b]);
    files.write("fp_scan.csv", &table(&["scan_hz", "free_running", "injected"], rows))?;

    m.push("kappa_coeff_hz", spec.injection.kappa_coeff);
    m.push("locking_bandwidth_predicted_hz", scan.predicted);
    m.push("locking_bandwidth_measured_hz", scan.measured);
    m.push("sweep_step_hz", cfg.lockband_step);
    m.push("probe_detuning_hz", cfg.probe_detuning);
    m.flag("probe_locked", probe.locked);
    m.push("probe_mean_freq_error_hz", probe.mean_freq_error);
    m.push("fp_separation_free_hz", free_peak - master_peak);
    m.push("fp_separation_injected_hz", locked_peak - master_peak);
    m.push("fp_scan_step_hz", step);
    Ok(())
}

fn hom(cfg: &ScenarioConfig, locked: bool, files: &mut Outputs, m: &mut Metrics, exec: Exec) -> Result<()> {
    let setup = hom_setup(cfg, locked)?;
    let run = run_hom(&setup, exec)?;
    let hist = run.histogram.rounded();
    files.write("histogram.csv", &hist.to_csv())?;
    let expected = setup.expected_model();
    let opts = FitOptions {
        gamma_init: round6(expected.gamma_rate.max(1e5)),
    };
    let fit = fit_hom_with(&hist, &opts)?;
    files.write("fit.csv", &fit.to_csv())?;
    let dip = analysis::visibility(&hist)?;

    m.push("visibility_fit", fit.model.visibility);
    m.push("visibility_fit_se", fit.std_errors[0]);
    m.push("gamma_rate", fit.model.gamma_rate);
    m.push("gamma_rate_se", fit.std_errors[1]);
    m.push("omega_diff", fit.model.omega_diff);
    m.push("omega_diff_se", fit.std_errors[2]);
    m.push("beat_frequency_hz", fit.model.omega_diff / std::f64::consts::TAU);
    m.push("baseline", fit.model.baseline);
    m.push("residual_rms", fit.residual_rms);
    m.flag("fit_converged", fit.converged);
    m.push("fit_gamma_init", opts.gamma_init);
    m.push("visibility_dip", dip);
    m.push("expected_visibility", expected.visibility);
    m.push("expected_gamma_rate", expected.gamma_rate);
    m.push("expected_omega_diff", expected.omega_diff);
    m.push("coincidence_level", run.coincidence_level());
    if locked {
        m.push("locked_fraction", run.locked_fraction());
    }
    m.push("total_pairs", hist.total_pairs() as f64);
    m.push("accumulation_time_s", hist.accumulation_time);
    m.push("bin_width_s", hist.bin_width);
    m.push("trials", setup.trials as f64);
    m.push("repeats_per_trial", run.repeats.iter().sum::<usize>() as f64 / run.repeats.len().max(1) as f64);
    m.push("dt_s", setup.dt);
    Ok(())
}

fn drift(cfg: &ScenarioConfig, files: &mut Outputs, m: &mut Metrics, exec: Exec) -> Result<()> {
    let spec = lock_sweep_spec(cfg, cfg.injection_power, cfg.drift_window, true)?;
    let windows = drift_retention(
        &spec,
        &cfg.drift,
        cfg.drift_initial_detuning,
        cfg.drift_duration,
        cfg.drift_windows,
        exec,
    )?;
    let rows = windows.iter().map(|w| {
        vec![
            w.time,
            w.detuning,
            if w.report.locked { 1.0 } else { 0.0 },
            w.report.mean_freq_error,
        ]
    });
    files.write(
        "drift.csv",
        &table(&["time_s", "detuning_hz", "locked", "mean_freq_error_hz"], rows),
    )?;
    let max_abs = windows.iter().map(|w| w.detuning.abs()).fold(0.0, f64::max);
    m.push("windows", windows.len() as f64);
    m.push("locked_windows", windows.iter().filter(|w| w.report.locked).count() as f64);
    m.push("retention", retention(&windows));
    m.push("max_abs_detuning_hz", max_abs);
    m.push("locking_bandwidth_hz", locking_bandwidth(&spec.injection));
    Ok(())
}

fn sweep(cfg: &ScenarioConfig, files: &mut Outputs, m: &mut Metrics, exec: Exec) -> Result<()> {
    let axes = &cfg.sweep;
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let base = cfg.entries.with("scenario", cfg.sweep_base.name());
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(axes.iter().map(|a| a.key.clone()));
    let mut rows = Vec::with_capacity(total);
    let mut metric_names: Option<Vec<String>> = None;
    for point in 0..total {
        let mut entries = base.clone();
        let mut rem = point;
        let mut picks = vec![0usize; axes.len()];
        for (i, a) in axes.iter().enumerate().rev() {
            picks[i] = rem % a.values.len();
            rem /= a.values.len();
        }
        for (a, &p) in axes.iter().zip(&picks) {
            entries = entries.with(&a.key, &a.values[p]);
        }
        let point_cfg = ScenarioConfig::from_entries(&entries)?;
        let dir = files.dir.join(format!("point_{point:03}"));
        let summary = run_scenario(&point_cfg, &dir, exec)?;
        files.artifacts.extend(summary.artifacts.iter().cloned());

        let names: Vec<String> = summary.metrics.iter().map(|(k, _)| k.clone()).collect();
        if metric_names.is_none() {
            metric_names = Some(names);
        }
        let mut row = vec![point as f64];
        for a in axes {
            let echoed = point_cfg
                .echo
                .iter()
                .find(|(k, _)| k == &a.key)
                .map(|(_, v)| v.split_whitespace().next().unwrap_or("").parse().unwrap_or(f64::NAN))
                .unwrap_or(f64::NAN);
            row.push(echoed);
        }
        for name in metric_names.as_ref().expect("set above") {
            row.push(summary.metric(name).unwrap_or(f64::NAN));
        }
        rows.push(row);
    }
    header.extend(metric_names.unwrap_or_default());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    files.write("sweep.csv", &table(&header_refs, rows))?;
    m.push("points", total as f64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hom_setup() {
        let cfg = ScenarioConfig::parse_str("").unwrap();
        let s = hom_setup(&cfg, true).unwrap();
        assert!((s.dt - 0.5e-9 / 11.0).abs() < 1e-20, "{}", s.dt);
        assert!((kappa_coeff(&cfg).unwrap() / 2.194e10 - 1.0).abs() < 1e-3);
        let e = s.expected_model();
        assert!((e.visibility - 0.4744).abs() < 1e-3, "{e:?}");
        assert_eq!(s.window, HOM_SPAN);
    }

    #[test]
    fn unwritable_output_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let cfg = ScenarioConfig::parse_str("scenario = drift\ndrift.windows = 2").unwrap();
        let err = run_scenario(&cfg, &blocker.join("sub"), Exec::Serial).unwrap_err();
        assert_eq!(err.exit_code(), 4, "{err}");
    }

    #[test]
    fn drift_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::parse_str("scenario = drift\ndrift.windows = 3\ninjection_power = 12 uW").unwrap();
        let s = run_scenario(&cfg, dir.path(), Exec::default()).unwrap();
        assert_eq!(s.metric("retention"), Some(1.0));
        assert!(dir.path().join("drift.csv").exists());
        let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(csv.starts_with("metric,value\nwindows,3.000000e+00\n"), "{csv}");
    }
}
