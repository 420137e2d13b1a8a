//! Scenario configuration files.
//!
//! One `key = value` per line, `#` starts a comment. Physical quantities
//! must carry a unit (`5 MHz`, `25 km`, `0.5 ns`); dimensionless values must
//! not. Lists separate items with commas. Omitted keys take defaults that
//! reproduce the reference setup.

use std::collections::BTreeMap;
use std::path::Path;

use crate::csv::sci;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Beat,
    Lockband,
    HomLocked,
    HomUnlocked,
    Drift,
    Sweep,
}

impl Scenario {
    pub const NAMES: [&'static str; 6] = ["beat", "lockband", "hom-locked", "hom-unlocked", "drift", "sweep"];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Beat => "beat",
            Scenario::Lockband => "lockband",
            Scenario::HomLocked => "hom-locked",
            Scenario::HomUnlocked => "hom-unlocked",
            Scenario::Drift => "drift",
            Scenario::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "beat" => Scenario::Beat,
            "lockband" => Scenario::Lockband,
            "hom-locked" => Scenario::HomLocked,
            "hom-unlocked" => Scenario::HomUnlocked,
            "drift" => Scenario::Drift,
            "sweep" => Scenario::Sweep,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Frequency,
    Time,
    Power,
    Length,
    Attenuation,
    DriftRate,
    Number,
    Count,
    Scenario,
    DriftModel,
    PowerList,
}

impl Kind {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Kind::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9), ("THz", 1e12)],
            Kind::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("μs", 1e-6),
                ("µs", 1e-6),
                ("ns", 1e-9),
                ("ps", 1e-12),
                ("fs", 1e-15),
                ("min", 60.0),
                ("h", 3600.0),
            ],
            Kind::Power | Kind::PowerList => &[
                ("W", 1.0),
                ("mW", 1e-3),
                ("uW", 1e-6),
                ("μW", 1e-6),
                ("µW", 1e-6),
                ("nW", 1e-9),
                ("pW", 1e-12),
            ],
            Kind::Length => &[("m", 1.0), ("km", 1e3)],
            Kind::Attenuation => &[("dB/km", 1.0), ("dB/m", 1e3)],
            Kind::DriftRate => &[("Hz/h", 1.0), ("kHz/h", 1e3), ("MHz/h", 1e6), ("GHz/h", 1e9), ("Hz/s", 3600.0)],
            _ => &[],
        }
    }

    /// Unit the value is stored and echoed in.
    fn base_unit(self) -> &'static str {
        match self {
            Kind::Frequency => "Hz",
            Kind::Time => "s",
            Kind::Power | Kind::PowerList => "W",
            Kind::Length => "m",
            Kind::Attenuation => "dB/km",
            Kind::DriftRate => "Hz/h",
            _ => "",
        }
    }

    fn describe(self) -> String {
        match self {
            Kind::Number => "a plain number without unit".into(),
            Kind::Count => "a non-negative integer".into(),
            Kind::Scenario => format!("one of {}", Scenario::NAMES.join(", ")),
            Kind::DriftModel => "one of none, linear, random-walk".into(),
            _ => {
                let names: Vec<&str> = self.units().iter().map(|u| u.0).collect();
                let list = if self == Kind::PowerList { "a comma-separated list of powers" } else { "a value" };
                format!("{list} with unit {}", names.join(", "))
            }
        }
    }
}

struct KeyDef {
    name: &'static str,
    kind: Kind,
    /// `None` means "auto": derived from other settings at run time.
    default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: &'static str) -> KeyDef {
    KeyDef {
        name,
        kind,
        default: Some(default),
    }
}

const fn auto(name: &'static str, kind: Kind) -> KeyDef {
    KeyDef {
        name,
        kind,
        default: None,
    }
}

const KEYS: &[KeyDef] = &[
    key("scenario", Kind::Scenario, "hom-locked"),
    key("seed", Kind::Count, "1"),
    key("trials", Kind::Count, "8"),
    key("linewidth", Kind::Frequency, "5 MHz"),
    auto("alice.linewidth", Kind::Frequency),
    auto("bob.linewidth", Kind::Frequency),
    key("detuning", Kind::Frequency, "153 MHz"),
    key("injection_power", Kind::Power, "4 uW"),
    key("slave_power", Kind::Power, "10 mW"),
    key("anchor.injection_power", Kind::Power, "12 uW"),
    key("anchor.bandwidth", Kind::Frequency, "760 MHz"),
    auto("kappa_coeff", Kind::Frequency),
    key("slave_noise_factor", Kind::Number, "1"),
    key("oil.length", Kind::Length, "25 km"),
    key("oil.attenuation", Kind::Attenuation, "0.2 dB/km"),
    key("oil.group_index", Kind::Number, "1.468"),
    key("link.length", Kind::Length, "50 km"),
    key("link.attenuation", Kind::Attenuation, "0.2 dB/km"),
    key("link.group_index", Kind::Number, "1.468"),
    key("alice_link.length", Kind::Length, "0 km"),
    key("alice_link.attenuation", Kind::Attenuation, "0.2 dB/km"),
    key("alice_link.group_index", Kind::Number, "1.468"),
    key("aom_shift", Kind::Frequency, "80 MHz"),
    key("pol_overlap", Kind::Number, "0.98"),
    key("arm_power_ratio", Kind::Number, "1"),
    key("detector.efficiency", Kind::Number, "0.8"),
    key("detector.dark_rate", Kind::Frequency, "100 Hz"),
    key("detector.dead_time", Kind::Time, "50 ns"),
    key("detector.jitter", Kind::Time, "50 ps"),
    key("click_rate", Kind::Frequency, "500 kHz"),
    auto("dt", Kind::Time),
    auto("span", Kind::Time),
    key("settle", Kind::Time, "100 ns"),
    key("bin_width", Kind::Time, "0.5 ns"),
    key("max_tau", Kind::Time, "640 ns"),
    key("pair_budget", Kind::Number, "1e7"),
    key("fsr", Kind::Frequency, "1.5 GHz"),
    key("finesse", Kind::Number, "100"),
    key("lockband.step", Kind::Frequency, "10 MHz"),
    key("lockband.window", Kind::Time, "1 us"),
    key("lockband.probe_detuning", Kind::Frequency, "267 MHz"),
    key("lockband.powers", Kind::PowerList, "1 uW, 2 uW, 4 uW, 8 uW, 12 uW, 16 uW, 20 uW"),
    key("lockband.scan_points", Kind::Count, "15001"),
    key("drift.kind", Kind::DriftModel, "linear"),
    key("drift.rate", Kind::DriftRate, "100 MHz/h"),
    key("drift.duration", Kind::Time, "1 h"),
    key("drift.windows", Kind::Count, "61"),
    key("drift.initial_detuning", Kind::Frequency, "0 Hz"),
    key("drift.window", Kind::Time, "1 us"),
    key("sweep.base", Kind::Scenario, "hom-locked"),
];

fn def(name: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<f64>),
    Text(String),
    Auto,
}

fn key_error(key: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Split `"5 MHz"` or `"5MHz"` into number and unit.
fn split_quantity(s: &str) -> (&str, &str) {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && s[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+')))
        })
        .map_or(s.len(), |(i, _)| i);
    (s[..end].trim(), s[end..].trim())
}

fn parse_scalar(kind: Kind, text: &str, key: &str, line: usize) -> Result<f64> {
    let expected = || format!("expected {}", kind.describe());
    let (num, unit) = split_quantity(text);
    let x: f64 = num
        .parse()
        .map_err(|_| key_error(key, line, format!("cannot read '{text}'; {}", expected())))?;
    if !x.is_finite() {
        return Err(key_error(key, line, format!("'{text}' is not finite")));
    }
    match kind {
        Kind::Number => {
            if !unit.is_empty() {
                return Err(key_error(key, line, format!("unexpected unit '{unit}'; {}", expected())));
            }
            Ok(x)
        }
        Kind::Count => {
            if !unit.is_empty() || x < 0.0 || x.fract() != 0.0 {
                return Err(key_error(key, line, format!("'{text}' is not {}", kind.describe())));
            }
            Ok(x)
        }
        _ => {
            if unit.is_empty() {
                return Err(key_error(key, line, format!("missing unit; {}", expected())));
            }
            match kind.units().iter().find(|(u, _)| *u == unit) {
                Some((_, scale)) => Ok(x * scale),
                None => Err(key_error(key, line, format!("unknown unit '{unit}'; {}", expected()))),
            }
        }
    }
}

fn parse_value(d: &KeyDef, text: &str, line: usize) -> Result<Value> {
    let text = text.trim();
    if text == "auto" && d.default.is_none() {
        return Ok(Value::Auto);
    }
    match d.kind {
        Kind::Scenario => match Scenario::parse(text) {
            Some(_) => Ok(Value::Text(text.into())),
            None => Err(key_error(d.name, line, format!("unknown scenario '{text}'; expected {}", d.kind.describe()))),
        },
        Kind::DriftModel => match text {
            "none" | "linear" | "random-walk" => Ok(Value::Text(text.into())),
            _ => Err(key_error(d.name, line, format!("unknown drift kind '{text}'; expected {}", d.kind.describe()))),
        },
        Kind::PowerList => text
            .split(',')
            .map(|item| parse_scalar(Kind::Power, item, d.name, line))
            .collect::<Result<Vec<_>>>()
            .map(Value::List),
        k => parse_scalar(k, text, d.name, line).map(Value::Num),
    }
}

fn echo_value(d: &KeyDef, v: &Value) -> String {
    let unit = d.kind.base_unit();
    let with_unit = |x: f64| {
        if unit.is_empty() {
            sci(x)
        } else {
            format!("{} {unit}", sci(x))
        }
    };
    match v {
        Value::Auto => "auto".into(),
        Value::Text(t) => t.clone(),
        Value::Num(x) if d.kind == Kind::Count => format!("{}", *x as u64),
        Value::Num(x) => with_unit(*x),
        Value::List(xs) => xs.iter().map(|x| with_unit(*x)).collect::<Vec<_>>().join(", "),
    }
}

/// Raw `key = value` entries with their line numbers, before defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Entries {
    values: BTreeMap<String, (String, usize)>,
}

impl Entries {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected 'key = value', got '{content}'")));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("line {line}: expected 'key = value', got '{content}'")));
            }
            let known = def(k).is_some() || k.strip_prefix("sweep.").and_then(def).is_some();
            if !known {
                return Err(key_error(k, line, "unknown key"));
            }
            if values.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(key_error(k, line, "key given twice"));
            }
        }
        Ok(Entries { values })
    }

    /// Copy with `key` set to `value`; overrides carry line number 0.
    pub fn with(&self, key: &str, value: &str) -> Self {
        let mut e = self.clone();
        e.values.insert(key.to_string(), (value.to_string(), 0));
        e
    }

    fn sweep_axes(&self) -> Vec<(String, Vec<String>, usize)> {
        self.values
            .iter()
            .filter_map(|(k, (v, line))| {
                let target = k.strip_prefix("sweep.")?;
                if target == "base" {
                    return None;
                }
                Some((target.to_string(), v.split(',').map(|s| s.trim().to_string()).collect(), *line))
            })
            .collect()
    }
}

/// One axis of a parameter sweep: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Fully resolved scenario configuration. Quantities are in SI units except
/// fiber lengths, which are km.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub trials: usize,
    pub alice_linewidth: f64,
    pub bob_linewidth: f64,
    pub detuning: f64,
    pub injection_power: f64,
    pub slave_power: f64,
    pub anchor_injection_power: f64,
    pub anchor_bandwidth: f64,
    pub kappa_coeff: Option<f64>,
    pub slave_noise_factor: f64,
    pub oil: crate::channel::FiberSpec,
    pub link: crate::channel::FiberSpec,
    pub alice_link: crate::channel::FiberSpec,
    pub aom_shift: f64,
    pub pol_overlap: f64,
    pub arm_power_ratio: f64,
    pub detector: crate::detect::DetectorSpec,
    pub click_rate: f64,
    pub dt: Option<f64>,
    pub span: Option<f64>,
    pub settle: f64,
    pub bin_width: f64,
    pub max_tau: f64,
    pub pair_budget: f64,
    pub fsr: f64,
    pub finesse: f64,
    pub lockband_step: f64,
    pub lockband_window: f64,
    pub probe_detuning: f64,
    pub lockband_powers: Vec<f64>,
    pub scan_points: usize,
    pub drift: crate::phasenoise::DriftModel,
    pub drift_duration: f64,
    pub drift_windows: usize,
    pub drift_initial_detuning: f64,
    pub drift_window: f64,
    pub sweep_base: Scenario,
    pub sweep: Vec<SweepAxis>,
    /// Effective value of every key, defaults included, in canonical units.
    pub echo: Vec<(String, String)>,
    /// The entries this config was built from, for sweep re-resolution.
    pub entries: Entries,
}

struct Resolved {
    values: BTreeMap<&'static str, Value>,
}

impl Resolved {
    fn num(&self, k: &str) -> f64 {
        match &self.values[k] {
            Value::Num(x) => *x,
            v => panic!("{k} is not numeric: {v:?}"),
        }
    }

    fn opt(&self, k: &str) -> Option<f64> {
        match &self.values[k] {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    fn text(&self, k: &str) -> &str {
        match &self.values[k] {
            Value::Text(t) => t,
            v => panic!("{k} is not text: {v:?}"),
        }
    }

    fn list(&self, k: &str) -> Vec<f64> {
        match &self.values[k] {
            Value::List(x) => x.clone(),
            v => panic!("{k} is not a list: {v:?}"),
        }
    }
}

impl ScenarioConfig {
    /// Resolve entries against the defaults and validate.
    pub fn from_entries(entries: &Entries) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut echo = Vec::new();
        for d in KEYS {
            let v = match entries.values.get(d.name) {
                Some((text, line)) => parse_value(d, text, *line)?,
                None => match d.default {
                    Some(text) => parse_value(d, text, 0)?,
                    None => Value::Auto,
                },
            };
            echo.push((d.name.to_string(), echo_value(d, &v)));
            values.insert(d.name, v);
        }
        let mut sweep = Vec::new();
        for (target, items, line) in entries.sweep_axes() {
            let sweep_key = format!("sweep.{target}");
            let d = def(&target).ok_or_else(|| key_error(&sweep_key, line, "unknown key"))?;
            if target == "scenario" {
                return Err(key_error(&sweep_key, line, "use sweep.base to choose the swept scenario"));
            }
            for item in &items {
                parse_value(d, item, line).map_err(|e| match e {
                    Error::ConfigKey { msg, .. } => key_error(&sweep_key, line, msg),
                    other => other,
                })?;
            }
            echo.push((sweep_key, items.join(", ")));
            sweep.push(SweepAxis {
                key: target,
                values: items,
            });
        }
        let r = Resolved { values };
        let line_of = |k: &str| entries.values.get(k).map_or(0, |(_, l)| *l);
        let check = |k: &str, ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(key_error(k, line_of(k), msg))
            }
        };

        let linewidth = r.num("linewidth");
        let fiber = |prefix: &str| crate::channel::FiberSpec {
            length: r.num(&format!("{prefix}.length")) / 1e3,
            attenuation: r.num(&format!("{prefix}.attenuation")),
            group_index: r.num(&format!("{prefix}.group_index")),
        };
        let drift_rate = r.num("drift.rate");
        let drift = match r.text("drift.kind") {
            "linear" => crate::phasenoise::DriftModel::linear(drift_rate),
            "random-walk" => crate::phasenoise::DriftModel::random_walk(drift_rate),
            _ => crate::phasenoise::DriftModel::NONE,
        };
        let cfg = ScenarioConfig {
            scenario: Scenario::parse(r.text("scenario")).expect("validated"),
            seed: r.num("seed") as u64,
            trials: r.num("trials") as usize,
            alice_linewidth: r.opt("alice.linewidth").unwrap_or(linewidth),
            bob_linewidth: r.opt("bob.linewidth").unwrap_or(linewidth),
            detuning: r.num("detuning"),
            injection_power: r.num("injection_power"),
            slave_power: r.num("slave_power"),
            anchor_injection_power: r.num("anchor.injection_power"),
            anchor_bandwidth: r.num("anchor.bandwidth"),
            kappa_coeff: r.opt("kappa_coeff"),
            slave_noise_factor: r.num("slave_noise_factor"),
            oil: fiber("oil"),
            link: fiber("link"),
            alice_link: fiber("alice_link"),
            aom_shift: r.num("aom_shift"),
            pol_overlap: r.num("pol_overlap"),
            arm_power_ratio: r.num("arm_power_ratio"),
            detector: crate::detect::DetectorSpec {
                efficiency: r.num("detector.efficiency"),
                dark_rate: r.num("detector.dark_rate"),
                dead_time: r.num("detector.dead_time"),
                jitter_sigma: r.num("detector.jitter"),
            },
            click_rate: r.num("click_rate"),
            dt: r.opt("dt"),
            span: r.opt("span"),
            settle: r.num("settle"),
            bin_width: r.num("bin_width"),
            max_tau: r.num("max_tau"),
            pair_budget: r.num("pair_budget"),
            fsr: r.num("fsr"),
            finesse: r.num("finesse"),
            lockband_step: r.num("lockband.step"),
            lockband_window: r.num("lockband.window"),
            probe_detuning: r.num("lockband.probe_detuning"),
            lockband_powers: r.list("lockband.powers"),
            scan_points: r.num("lockband.scan_points") as usize,
            drift,
            drift_duration: r.num("drift.duration"),
            drift_windows: r.num("drift.windows") as usize,
            drift_initial_detuning: r.num("drift.initial_detuning"),
            drift_window: r.num("drift.window"),
            sweep_base: Scenario::parse(r.text("sweep.base")).expect("validated"),
            sweep,
            echo,
            entries: entries.clone(),
        };

        check("trials", cfg.trials >= 1, "must be at least 1")?;
        check("linewidth", linewidth >= 0.0, "must be >= 0")?;
        check("alice.linewidth", cfg.alice_linewidth >= 0.0, "must be >= 0")?;
        check("bob.linewidth", cfg.bob_linewidth >= 0.0, "must be >= 0")?;
        check("injection_power", cfg.injection_power >= 0.0, "must be >= 0")?;
        check("slave_power", cfg.slave_power > 0.0, "must be > 0")?;
        check("anchor.injection_power", cfg.anchor_injection_power > 0.0, "must be > 0")?;
        check("anchor.bandwidth", cfg.anchor_bandwidth > 0.0, "must be > 0")?;
        check("kappa_coeff", cfg.kappa_coeff.is_none_or(|k| k > 0.0), "must be > 0")?;
        check("slave_noise_factor", cfg.slave_noise_factor >= 0.0, "must be >= 0")?;
        for p in ["oil", "link", "alice_link"] {
            let f = fiber(p);
            check(&format!("{p}.length"), f.length >= 0.0, "must be >= 0")?;
            check(&format!("{p}.attenuation"), f.attenuation >= 0.0, "must be >= 0")?;
            check(&format!("{p}.group_index"), f.group_index >= 1.0, "must be >= 1")?;
        }
        check("pol_overlap", (0.0..=1.0).contains(&cfg.pol_overlap), "must be in [0, 1]")?;
        check("arm_power_ratio", cfg.arm_power_ratio > 0.0, "must be > 0")?;
        check(
            "detector.efficiency",
            (0.0..=1.0).contains(&cfg.detector.efficiency),
            "must be in [0, 1]",
        )?;
        check("detector.dark_rate", cfg.detector.dark_rate >= 0.0, "must be >= 0")?;
        check("detector.dead_time", cfg.detector.dead_time >= 0.0, "must be >= 0")?;
        check("detector.jitter", cfg.detector.jitter_sigma >= 0.0, "must be >= 0")?;
        check("click_rate", cfg.click_rate >= 0.0, "must be >= 0")?;
        check("dt", cfg.dt.is_none_or(|x| x > 0.0), "must be > 0")?;
        check("span", cfg.span.is_none_or(|x| x > 0.0), "must be > 0")?;
        check("settle", cfg.settle >= 0.0, "must be >= 0")?;
        check("bin_width", cfg.bin_width > 0.0, "must be > 0")?;
        check("max_tau", cfg.max_tau > 0.0, "must be > 0")?;
        check("pair_budget", cfg.pair_budget >= 0.0, "must be >= 0")?;
        check("fsr", cfg.fsr > 0.0, "must be > 0")?;
        check("finesse", cfg.finesse > 1.0, "must be > 1")?;
        check("lockband.step", cfg.lockband_step > 0.0, "must be > 0")?;
        check("lockband.window", cfg.lockband_window > 0.0, "must be > 0")?;
        check("lockband.powers", cfg.lockband_powers.iter().all(|p| *p > 0.0), "powers must be > 0")?;
        check("lockband.scan_points", cfg.scan_points >= 3, "must be at least 3")?;
        check("drift.rate", drift_rate >= 0.0, "must be >= 0")?;
        check("drift.duration", cfg.drift_duration > 0.0, "must be > 0")?;
        check("drift.windows", cfg.drift_windows >= 1, "must be at least 1")?;
        check("drift.window", cfg.drift_window > 0.0, "must be > 0")?;
        check(
            "sweep.base",
            cfg.sweep_base != Scenario::Sweep,
            "a sweep cannot sweep sweeps",
        )?;
        if cfg.scenario == Scenario::Sweep && cfg.sweep.is_empty() {
            return Err(Error::Config("sweep scenario needs at least one 'sweep.<key> = v1, v2' line".into()));
        }
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::from_entries(&Entries::parse(text)?)
    }

    /// `--seed` / `--trials` style override of a single key.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        Self::from_entries(&self.entries.with(key, value))
    }

    /// Echo as config-file text.
    pub fn echo_text(&self) -> String {
        self.echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Read and resolve a configuration file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::parse_str(&text)
}
