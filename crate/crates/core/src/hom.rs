//! Two-source coincidence experiment.
//!
//! Alice's master laser feeds two paths: the injection-locking link to Bob's
//! laser and a (possibly zero-length) fiber to Charlie. Bob's laser, locked
//! or free running, travels its own fiber to Charlie. Variable attenuators
//! balance the arms, the 50:50 splitter mixes them, and one detector watches
//! each output.
//!
//! Each trial simulates one stretch of optical field. Many independent click
//! realizations are then drawn from that trial's output intensities until the
//! pair budget is met; the counts pool into one histogram.

use crate::analysis::{expected_visibility, gamma_from_linewidths, HomModel};
use crate::channel::{beamsplitter, propagate, FiberSpec};
use crate::detect::{ClickSampler, CoincidenceAccumulator, CoincidenceHistogram, DetectorSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::injection::{locking_bandwidth, lock_phase_variance, simulate_slave, InjectionConfig, LockReport};
use crate::phasenoise::{laser_field, FieldTrajectory, LaserSpec, SimGrid};
use crate::rng::{self, tag};

/// Nominal power of each arm at the splitter after balancing, W. Only the
/// ratio between arms matters; click rates are set separately.
const ARM_POWER: f64 = 1e-6;
/// Samples per period of the fastest frequency in the problem.
const SAMPLES_PER_PERIOD: f64 = 50.0;
/// Upper bound on click-realization chunks per trial.
const MAX_CHUNKS: usize = 256;
/// Extra pairs drawn beyond the budget to absorb the rate estimate's slack.
const BUDGET_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BobMode {
    /// Bob's laser is injection locked to Alice's over the OIL fiber.
    Locked(InjectionConfig),
    FreeRunning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomSetup {
    /// Alice's laser; `power` is the launch power.
    pub master: LaserSpec,
    /// Bob's laser when free running. In locked mode the slave parameters
    /// come from the injection config.
    pub bob: LaserSpec,
    pub mode: BobMode,
    pub oil: FiberSpec,
    pub bob_link: FiberSpec,
    pub alice_link: FiberSpec,
    pub pol_overlap: f64,
    /// Bob-arm over Alice-arm power at the splitter.
    pub arm_power_ratio: f64,
    pub detectors: [DetectorSpec; 2],
    /// Target mean click rate per detector, Hz.
    pub click_rate: f64,
    pub dt: f64,
    /// Useful field duration per trial, s.
    pub window: f64,
    /// Lock-in time discarded after the injected light arrives, s.
    pub settle: f64,
    pub bin_width: f64,
    pub max_tau: f64,
    /// Coincidence pairs to collect over all trials.
    pub pair_budget: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Time step giving a whole number of samples per bin and at least
/// `SAMPLES_PER_PERIOD` samples per period of `f_max`.
pub fn auto_dt(bin_width: f64, f_max: f64) -> f64 {
    let per_bin = (bin_width * SAMPLES_PER_PERIOD * f_max.abs()).ceil().max(1.0);
    bin_width / per_bin
}

impl HomSetup {
    pub fn validate(&self) -> Result<()> {
        self.master.validate()?;
        self.bob.validate()?;
        self.oil.validate()?;
        self.bob_link.validate()?;
        self.alice_link.validate()?;
        for d in &self.detectors {
            d.validate()?;
        }
        if let BobMode::Locked(cfg) = &self.mode {
            cfg.validate()?;
        }
        if !(0.0..=1.0).contains(&self.pol_overlap) {
            return Err(Error::Domain(format!(
                "polarization overlap must be in [0, 1], got {}",
                self.pol_overlap
            )));
        }
        let positive = [
            ("arm power ratio", self.arm_power_ratio),
            ("dt", self.dt),
            ("window", self.window),
            ("bin width", self.bin_width),
            ("max tau", self.max_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.click_rate >= 0.0) || !(self.pair_budget >= 0.0) || !(self.settle >= 0.0) {
            return Err(Error::Domain("click rate, pair budget and settle time must be >= 0".into()));
        }
        if self.trials == 0 {
            return Err(Error::Domain("at least one trial is needed".into()));
        }
        if self.window < 2.0 * self.max_tau {
            return Err(Error::SpanTooShort(format!(
                "window {:.3e} s is shorter than twice max_tau {:.3e} s",
                self.window, self.max_tau
            )));
        }
        Ok(())
    }

    /// Free-running detuning of Bob's laser from Alice's, Hz.
    pub fn detuning(&self) -> f64 {
        match &self.mode {
            BobMode::Locked(cfg) => cfg.slave_spec.nu_offset - self.master.nu_offset,
            BobMode::FreeRunning => self.bob.nu_offset - self.master.nu_offset,
        }
    }

    /// Fringe parameters the configuration implies, normalized to a unit
    /// baseline. For a locked pair the fringe decays with twice the master
    /// linewidth (the two arms carry master phase noise from instants far
    /// more than a coherence time apart) and its depth is reduced by the
    /// residual lock phase jitter.
    pub fn expected_model(&self) -> HomModel {
        let v0 = expected_visibility(self.pol_overlap, self.arm_power_ratio);
        match &self.mode {
            BobMode::Locked(cfg) => {
                let var = lock_phase_variance(self.master.linewidth_fwhm, cfg, self.detuning());
                HomModel {
                    visibility: v0 * (-var).exp(),
                    gamma_rate: gamma_from_linewidths(self.master.linewidth_fwhm, self.master.linewidth_fwhm),
                    omega_diff: 0.0,
                    baseline: 1.0,
                }
            }
            BobMode::FreeRunning => HomModel {
                visibility: v0,
                gamma_rate: gamma_from_linewidths(self.master.linewidth_fwhm, self.bob.linewidth_fwhm),
                omega_diff: std::f64::consts::TAU * self.detuning().abs(),
                baseline: 1.0,
            },
        }
    }

    fn window_samples(&self) -> usize {
        (self.window / self.dt).round() as usize
    }

    /// Rate per watt that puts detector `i` at `click_rate` on average.
    pub fn rate_per_watt(&self, i: usize) -> f64 {
        let mean_intensity = 0.5 * ARM_POWER * (1.0 + self.arm_power_ratio);
        let eff = self.detectors[i].efficiency;
        if eff > 0.0 {
            self.click_rate / (eff * mean_intensity)
        } else {
            0.0
        }
    }
}

/// Balanced Alice and Bob fields arriving at Charlie during one trial's
/// useful window, plus Bob's lock report in locked mode.
///
/// In locked mode the master trajectory spans the OIL delay, the lock-in
/// time, Bob's link delay and the window, so the Alice arm carries master
/// phase noise from the instants it really left Alice. Bob's laser is only
/// integrated over the stretch whose output reaches Charlie inside the
/// window; its link delay is applied as that index offset. In free-running
/// mode the lasers are independent and stationary, so link delays change
/// nothing but the time origin. Link losses are absorbed by the balancing
/// attenuators in both modes.
pub fn charlie_inputs(setup: &HomSetup, trial: usize) -> Result<(FieldTrajectory, FieldTrajectory, Option<LockReport>)> {
    let dt = setup.dt;
    let t = trial as u64;
    let u = setup.window_samples();
    let seed_grid = |n: usize, tag: u64| SimGrid::new(dt, n, setup.seed).map(|g| g.reseeded(tag, t));

    let (alice, bob, report, bob_power) = match &setup.mode {
        BobMode::Locked(cfg) => {
            let d_oil = setup.oil.delay_samples(dt);
            let d_alice = setup.alice_link.delay_samples(dt);
            let d_bob = setup.bob_link.delay_samples(dt);
            let settle = (setup.settle / dt).ceil() as usize;
            // Charlie sample `start + i` sees Bob's laser at source sample
            // `d_oil + settle + i` and Alice's at `start + i - d_alice`.
            let start = (d_oil + settle + d_bob).max(d_alice + 1);
            let slave_len = start - d_bob - d_oil + u;
            let n = d_oil + slave_len;
            let n_master = n.max(start + u - d_alice);
            let master = laser_field(&setup.master, &seed_grid(n_master, tag::MASTER_PHASE)?)?;
            let injected = propagate(&master.window(0, n)?, &setup.oil)?.window(d_oil, slave_len)?;
            let grid = seed_grid(slave_len, tag::SLAVE_NOISE)?;
            let (slave, report) = simulate_slave(&injected, cfg, &grid)?;
            drop(injected);
            let bob = slave.window(slave_len - u, u)?;
            let alice = master.window(start - d_alice, u)?;
            (alice, bob, Some(report), cfg.slave_power)
        }
        BobMode::FreeRunning => {
            let alice = laser_field(&setup.master, &seed_grid(u, tag::MASTER_PHASE)?)?;
            let bob = laser_field(&setup.bob, &seed_grid(u, tag::SLAVE_PHASE)?)?;
            (alice, bob, None, setup.bob.power)
        }
    };

    let a = alice.scaled((ARM_POWER / setup.master.power).sqrt());
    let b = bob.scaled((setup.arm_power_ratio * ARM_POWER / bob_power).sqrt());
    Ok((a, b, report))
}

#[derive(Debug, Clone)]
pub struct HomRun {
    pub histogram: CoincidenceHistogram,
    pub accumulator: CoincidenceAccumulator,
    /// One per trial in locked mode.
    pub locks: Vec<LockReport>,
    /// Click realizations drawn per trial.
    pub repeats: Vec<usize>,
}

impl HomRun {
    /// Mean coincidence rate relative to the product of the singles rates.
    /// Equals one for uncorrelated detectors; the outer-bin normalization
    /// hides any uniform suppression, which this ratio exposes.
    pub fn coincidence_level(&self) -> f64 {
        let acc = &self.accumulator;
        let t = acc.accumulation_time;
        if t <= 0.0 || acc.clicks[0] == 0 || acc.clicks[1] == 0 {
            return 0.0;
        }
        let r1 = acc.clicks[0] as f64 / t;
        let r2 = acc.clicks[1] as f64 / t;
        let exposure = acc.exposure();
        let levels: Vec<f64> = acc
            .counts
            .iter()
            .zip(&exposure)
            .filter(|(_, e)| **e > 0.0)
            .map(|(&c, &e)| c as f64 / (r1 * r2 * acc.bin_width * e))
            .collect();
        levels.iter().sum::<f64>() / levels.len().max(1) as f64
    }

    pub fn locked_fraction(&self) -> f64 {
        if self.locks.is_empty() {
            return 0.0;
        }
        self.locks.iter().filter(|r| r.locked).count() as f64 / self.locks.len() as f64
    }
}

/// Run every trial and pool the coincidences.
///
/// Trials run one after another to bound memory; click realizations within
/// a trial fan out over `exec`. Chunk boundaries and the merge order are
/// fixed, so the result does not depend on `exec`.
pub fn run_hom(setup: &HomSetup, exec: Exec) -> Result<HomRun> {
    setup.validate()?;
    if let BobMode::Locked(cfg) = &setup.mode {
        if locking_bandwidth(cfg) <= 0.0 {
            return Err(Error::Domain("locked mode needs nonzero injection power".into()));
        }
    }
    let mut total = CoincidenceAccumulator::new(setup.bin_width, setup.max_tau)?;
    let mut locks = Vec::new();
    let mut repeats = Vec::with_capacity(setup.trials);
    let rpw = [setup.rate_per_watt(0), setup.rate_per_watt(1)];
    let reach = 2.0 * total.half_bins as f64 * setup.bin_width + setup.bin_width;

    for trial in 0..setup.trials {
        let (a, b, report) = charlie_inputs(setup, trial)?;
        locks.extend(report);
        let ports = beamsplitter(&a, &b, setup.pol_overlap)?;
        drop((a, b));
        let s1 = ClickSampler::new(&ports.intensity1(), setup.dt, &setup.detectors[0], rpw[0])?;
        let s2 = ClickSampler::new(&ports.intensity2(), setup.dt, &setup.detectors[1], rpw[1])?;
        drop(ports);

        let per_repeat = s1.mean_rate() * s2.mean_rate() * s1.span() * reach;
        let wanted = BUDGET_MARGIN * setup.pair_budget / setup.trials as f64;
        let n_rep = if per_repeat > 0.0 {
            ((wanted / per_repeat).ceil() as usize).max(1)
        } else {
            1
        };
        repeats.push(n_rep);

        let chunks = n_rep.min(MAX_CHUNKS);
        let empty = CoincidenceAccumulator::new(setup.bin_width, setup.max_tau)?;
        let parts = exec.map(chunks, |c| {
            let mut acc = empty.clone();
            for r in c * n_rep / chunks..(c + 1) * n_rep / chunks {
                let idx = ((trial as u64) << 32) | r as u64;
                let x = s1.sample(rng::derive_seed(setup.seed, tag::CLICKS_1, idx));
                let y = s2.sample(rng::derive_seed(setup.seed, tag::CLICKS_2, idx));
                acc.add(&x, &y);
            }
            acc
        });
        for p in &parts {
            total = total.merge(p);
        }
    }
    let histogram = total.finish()?;
    Ok(HomRun {
        histogram,
        accumulator: total,
        locks,
        repeats,
    })
}
