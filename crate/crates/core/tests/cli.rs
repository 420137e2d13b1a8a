use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use longoil::analysis::{fit_hom_with, fwhm, line_center, visibility, FitOptions, Spectrum};
use longoil::csv::sci;
use longoil::detect::CoincidenceHistogram;

const SMALL_HOM: &str = "\
scenario = hom-unlocked
span = 60 us
max_tau = 120 ns
trials = 2
pair_budget = 3e5
";

fn sim(config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("run.conf");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, body)
}

fn summary(dir: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(dir.join("summary.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

fn metric(s: &[(String, f64)], name: &str) -> f64 {
    s.iter().find(|(k, _)| k == name).unwrap_or_else(|| panic!("no {name}")).1
}

fn same(a: f64, b: f64) -> bool {
    sci(a) == sci(b)
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim("linewidth = 5 parsecs\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("linewidth") && err.contains("line 1") && err.contains("MHz"), "{err}");

    let out = sim("scenario = teleport\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));

    let out = sim("seed = 1\nwavelength = 1550 nm\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wavelength"));

    let out = sim("scenario = hom-locked\ninjection_power = 0 W\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));

    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let cfg = dir.path().join("d.conf");
    fs::write(&cfg, "scenario = drift\ndrift.windows = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sim"))
        .arg(&cfg)
        .arg("--out")
        .arg(blocker.join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    let missing = Command::new(env!("CARGO_BIN_EXE_sim")).arg(dir.path().join("nope.conf")).output().unwrap();
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn quiet_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim("scenario = drift\ndrift.windows = 2\n", dir.path(), &[]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("linewidth = 5.000000e+06 Hz"), "{stdout}");
    assert!(stdout.contains("retention = "));
    let echo = fs::read_to_string(dir.path().join("out/config.txt")).unwrap();
    assert!(echo.contains("oil.length = 2.500000e+04 m"));

    let out = sim("scenario = drift\ndrift.windows = 2\n", dir.path(), &["--quiet", "--seed", "9"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(metric(&summary(&dir.path().join("out")), "seed"), 9.0);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(sim(SMALL_HOM, a.path(), &["--quiet"]).status.success());
    assert!(sim(SMALL_HOM, b.path(), &["--quiet", "--serial"]).status.success());
    for f in ["histogram.csv", "fit.csv", "summary.csv", "config.txt"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(!x.is_empty());
        assert!(x == y, "{f} differs");
    }
    let c = tempfile::tempdir().unwrap();
    assert!(sim(SMALL_HOM, c.path(), &["--quiet", "--seed", "2"]).status.success());
    assert_ne!(
        fs::read(a.path().join("out/histogram.csv")).unwrap(),
        fs::read(c.path().join("out/histogram.csv")).unwrap()
    );
}

#[test]
fn hom_summary_recomputes_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sim(SMALL_HOM, dir.path(), &["--quiet"]).status.success());
    let out = dir.path().join("out");
    let s = summary(&out);
    let (header, body) = rows(&out.join("histogram.csv"));
    assert_eq!(header, ["tau_s", "raw_count", "normalized", "sigma"]);
    let hist = CoincidenceHistogram {
        bin_width: metric(&s, "bin_width_s"),
        tau: body.iter().map(|r| r[0]).collect(),
        raw: body.iter().map(|r| r[1] as u64).collect(),
        normalized: body.iter().map(|r| r[2]).collect(),
        accumulation_time: metric(&s, "accumulation_time_s"),
        empty: false,
    };
    assert!(same(hist.total_pairs() as f64, metric(&s, "total_pairs")));
    let fit = fit_hom_with(
        &hist,
        &FitOptions {
            gamma_init: metric(&s, "fit_gamma_init"),
        },
    )
    .unwrap();
    assert!(same(fit.model.visibility, metric(&s, "visibility_fit")));
    assert!(same(fit.model.gamma_rate, metric(&s, "gamma_rate")));
    assert!(same(fit.model.omega_diff, metric(&s, "omega_diff")));
    assert!(same(fit.std_errors[0], metric(&s, "visibility_fit_se")));
    assert!(same(visibility(&hist).unwrap(), metric(&s, "visibility_dip")));

    let fit_csv = fs::read_to_string(out.join("fit.csv")).unwrap();
    let fit_rows: Vec<&str> = fit_csv.lines().skip(1).collect();
    assert!(fit_rows[0].starts_with(&format!("visibility,{}", sci(metric(&s, "visibility_fit")))));
}

#[test]
fn beat_summary_recomputes_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sim("scenario = beat\nspan = 100 us\n", dir.path(), &["--quiet"]).status.success());
    let out = dir.path().join("out");
    let s = summary(&out);
    let (header, body) = rows(&out.join("spectrum.csv"));
    assert_eq!(header, ["freq_hz", "psd"]);
    let spec = Spectrum {
        freqs: body.iter().map(|r| r[0]).collect(),
        psd: body.iter().map(|r| r[1]).collect(),
        resolution_bw: metric(&s, "resolution_bw_hz"),
    };
    assert!(same(fwhm(&spec).unwrap(), metric(&s, "beat_fwhm_hz")));
    assert!(same(line_center(&spec).unwrap(), metric(&s, "beat_center_hz")));
    let rbw = 1.5 * spec.bin_spacing();
    assert!((rbw / metric(&s, "resolution_bw_hz") - 1.0).abs() < 1e-5);
}

#[test]
fn lockband_and_drift_recompute_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "scenario = lockband\nlockband.powers = 4 uW, 12 uW\nlockband.step = 40 MHz\n";
    assert!(sim(cfg, dir.path(), &["--quiet"]).status.success());
    let out = dir.path().join("out");
    let s = summary(&out);
    let (_, lb) = rows(&out.join("lockband.csv"));
    let measured = lb.iter().take_while(|r| r[1] == 1.0).last().map_or(0.0, |r| r[0]);
    assert!(same(measured, metric(&s, "locking_bandwidth_measured_hz")));
    let (_, ps) = rows(&out.join("power_sweep.csv"));
    assert_eq!(ps.len(), 2);
    assert!(ps[1][2] > ps[0][2]);

    let dir = tempfile::tempdir().unwrap();
    let cfg = "scenario = drift\ndrift.windows = 5\ndrift.rate = 600 MHz/h\n";
    assert!(sim(cfg, dir.path(), &["--quiet"]).status.success());
    let out = dir.path().join("out");
    let s = summary(&out);
    let (_, dr) = rows(&out.join("drift.csv"));
    let kept = dr.iter().filter(|r| r[2] == 1.0).count() as f64;
    assert!(same(kept, metric(&s, "locked_windows")));
    assert!(same(kept / dr.len() as f64, metric(&s, "retention")));
    assert!(kept < 5.0);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "scenario = sweep\nsweep.base = drift\ndrift.windows = 3\nsweep.injection_power = 1 uW, 4 uW\nsweep.drift.rate = 100 MHz/h, 400 MHz/h, 800 MHz/h\n";
    assert!(sim(cfg, dir.path(), &["--quiet"]).status.success());
    let out = dir.path().join("out");
    let (header, body) = rows(&out.join("sweep.csv"));
    assert_eq!(&header[..3], ["point", "drift.rate", "injection_power"]);
    assert_eq!(body.len(), 6);
    for (i, row) in body.iter().enumerate() {
        let point = out.join(format!("point_{i:03}"));
        let s = summary(&point);
        assert!(same(row[header.iter().position(|h| h == "retention").unwrap()], metric(&s, "retention")));
    }
    assert_eq!(body[0][1], 1e8);
    assert_eq!(body[1][2], 4e-6);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            longoil::cli::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}
