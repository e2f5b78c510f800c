//! Monte-Carlo generation of the two raw timestamp streams.
//!
//! Every stage draws from its own ChaCha stream keyed by `(seed, stage)`, so a
//! run is reproducible bit-for-bit regardless of how the stages are scheduled.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::error::{Error, Result};
use crate::model::{DispersionLeg, SourceParams, FWHM_PER_SIGMA};
use crate::tags::{TagStream, FS_PER_PS, FS_PER_S};

/// Upper bound on pairs generated in a single run.
pub const MAX_PAIRS: f64 = 2e9;

/// How the idler detuning relates to the signal detuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrelationMode {
    /// Energy-time entangled: idler detuning = −signal detuning.
    Anti,
    /// Classical analog: idler detuning = +signal detuning.
    Positive,
    /// Idler detuning drawn independently.
    None,
}

impl CorrelationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationMode::Anti => "anti",
            CorrelationMode::Positive => "positive",
            CorrelationMode::None => "none",
        }
    }
}

impl std::str::FromStr for CorrelationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "anti" => Ok(CorrelationMode::Anti),
            "positive" => Ok(CorrelationMode::Positive),
            "none" => Ok(CorrelationMode::None),
            other => Err(format!(
                "unknown correlation mode `{other}` (anti, positive, none)"
            )),
        }
    }
}

impl std::fmt::Display for CorrelationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Signal,
    Idler,
}

#[derive(Clone, Copy)]
enum Stage {
    Pairs = 1,
    PropagateSignal = 2,
    PropagateIdler = 3,
    DetectSignal = 4,
    DetectIdler = 5,
}

fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub emission_fs: i64,
    /// Signal-minus-idler emission offset, fs.
    pub delta_t_fs: f64,
    /// Signal detuning, rad/ps.
    pub omega: f64,
    /// Idler detuning, rad/ps, as implied by `mode`.
    pub idler_omega: f64,
    pub mode: CorrelationMode,
}

/// A time in fs kept as an integer part plus a fraction in [0, 1), so that
/// sub-fs offsets survive on top of multi-second absolute times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonTime {
    pub whole_fs: i64,
    pub frac_fs: f64,
}

impl PhotonTime {
    pub fn new(whole_fs: i64, offset_fs: f64) -> Self {
        let floor = offset_fs.floor();
        PhotonTime {
            whole_fs: whole_fs.saturating_add(floor as i64),
            frac_fs: offset_fs - floor,
        }
    }

    pub fn shifted(self, offset_fs: f64) -> Self {
        PhotonTime::new(self.whole_fs, self.frac_fs + offset_fs)
    }

    /// `self − other`, fs.
    pub fn diff_fs(self, other: PhotonTime) -> f64 {
        (self.whole_fs as i128 - other.whole_fs as i128) as f64 + (self.frac_fs - other.frac_fs)
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.whole_fs
            .cmp(&other.whole_fs)
            .then(self.frac_fs.total_cmp(&other.frac_fs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: PhotonTime,
    pub survived: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub jitter_fwhm_ps: f64,
    pub dark_rate_hz: f64,
    pub dead_time_ns: f64,
}

impl Default for DetectorSpec {
    /// Superconducting nanowire detector; the pair of them gives a 37.6 ps
    /// combined timing FWHM.
    fn default() -> Self {
        DetectorSpec {
            efficiency: 0.5,
            jitter_fwhm_ps: 37.6 / std::f64::consts::SQRT_2,
            dark_rate_hz: 100.0,
            dead_time_ns: 40.0,
        }
    }
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        DetectorSpec {
            efficiency: 1.0,
            jitter_fwhm_ps: 0.0,
            dark_rate_hz: 0.0,
            dead_time_ns: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter(format!(
                "efficiency must be in [0, 1], got {}",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("jitter_fwhm", self.jitter_fwhm_ps),
            ("dark_rate", self.dark_rate_hz),
            ("dead_time", self.dead_time_ns),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimerSpec {
    pub resolution_fs: u64,
    pub clock_offset_fs: i64,
    pub site_id: u32,
}

impl TimerSpec {
    pub fn new(site_id: u32) -> Self {
        TimerSpec {
            resolution_fs: 1_000,
            clock_offset_fs: 0,
            site_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution_fs == 0 || self.resolution_fs > i64::MAX as u64 {
            return Err(Error::InvalidParameter(
                "timer resolution must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Emits pairs as a Poisson process over `[0, duration_s)`.
pub fn generate_pairs(
    src: &SourceParams,
    mode: CorrelationMode,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<PairEvent>> {
    src.validate()?;
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "duration must be >= 0, got {duration_s}"
        )));
    }
    let duration_fs = duration_s * FS_PER_S;
    if duration_fs >= i64::MAX as f64 {
        return Err(Error::Range(format!(
            "duration {duration_s} s overflows the 64-bit fs timestamp range"
        )));
    }
    let expected = src.pair_rate_hz * duration_s;
    if expected > MAX_PAIRS {
        return Err(Error::Range(format!(
            "{expected:.3e} expected pairs exceeds the limit of {MAX_PAIRS:.0e}"
        )));
    }
    if duration_s == 0.0 || src.pair_rate_hz == 0.0 {
        return Ok(Vec::new());
    }

    let mut rng = stage_rng(seed, Stage::Pairs);
    let gaps = Exp::new(src.pair_rate_hz / FS_PER_S)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let delta = Normal::new(0.0, src.coherence_sigma_ps() * FS_PER_PS as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let detuning = Normal::new(0.0, src.spectral_sigma_omega)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut out = Vec::with_capacity((expected * 1.01 + 16.0) as usize);
    let mut t = 0.0f64;
    loop {
        t += gaps.sample(&mut rng);
        if t >= duration_fs {
            break;
        }
        let delta_t_fs = delta.sample(&mut rng);
        let omega = detuning.sample(&mut rng);
        let idler_omega = match mode {
            CorrelationMode::Anti => -omega,
            CorrelationMode::Positive => omega,
            CorrelationMode::None => detuning.sample(&mut rng),
        };
        out.push(PairEvent {
            emission_fs: t.floor() as i64,
            delta_t_fs,
            omega,
            idler_omega,
            mode,
        });
    }
    Ok(out)
}

/// Moves one photon of each pair through a fiber leg.
///
/// The arrival is the emission time, ±half the intra-pair offset, the group
/// delay, and the dispersive shift k″l·Ω. Survival is Bernoulli in the leg
/// transmission.
pub fn propagate(
    events: &[PairEvent],
    leg: &DispersionLeg,
    arm: Arm,
    seed: u64,
) -> Result<Vec<Arrival>> {
    leg.validate()?;
    let stage = match arm {
        Arm::Signal => Stage::PropagateSignal,
        Arm::Idler => Stage::PropagateIdler,
    };
    let mut rng = stage_rng(seed, stage);
    let p = leg.survival_probability();
    let delay = leg.group_delay_fs();
    let k2l_fs = leg.k2l_ps2() * FS_PER_PS as f64;
    Ok(events
        .iter()
        .map(|ev| {
            let survived = rng.random::<f64>() < p;
            let (half, detuning) = match arm {
                Arm::Signal => (0.5 * ev.delta_t_fs, ev.omega),
                Arm::Idler => (-0.5 * ev.delta_t_fs, ev.idler_omega),
            };
            Arrival {
                time: PhotonTime::new(ev.emission_fs, half + delay + k2l_fs * detuning),
                survived,
            }
        })
        .collect())
}

/// Detector response: efficiency thinning, Gaussian jitter, dark counts over
/// `window_fs`, then non-paralyzable dead time. Output is sorted.
pub fn detect(
    arrivals: &[Arrival],
    det: &DetectorSpec,
    arm: Arm,
    window_fs: (i64, i64),
    seed: u64,
) -> Result<Vec<PhotonTime>> {
    det.validate()?;
    let stage = match arm {
        Arm::Signal => Stage::DetectSignal,
        Arm::Idler => Stage::DetectIdler,
    };
    let mut rng = stage_rng(seed, stage);
    let jitter_fs = det.jitter_sigma_ps() * FS_PER_PS as f64;
    let jitter = Normal::new(0.0, jitter_fs).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut times: Vec<PhotonTime> = Vec::with_capacity(arrivals.len() / 2 + 16);
    for a in arrivals.iter().filter(|a| a.survived) {
        if rng.random::<f64>() >= det.efficiency {
            continue;
        }
        let t = if jitter_fs > 0.0 {
            a.time.shifted(jitter.sample(&mut rng))
        } else {
            a.time
        };
        times.push(t);
    }

    let (start, end) = window_fs;
    let span_fs = (end as i128 - start as i128).max(0) as f64;
    let mean_dark = det.dark_rate_hz * span_fs / FS_PER_S;
    if mean_dark > 0.0 {
        let n = Poisson::new(mean_dark)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(&mut rng) as u64;
        for _ in 0..n {
            times.push(PhotonTime::new(start, rng.random::<f64>() * span_fs));
        }
    }

    times.sort_by(PhotonTime::total_cmp);

    let dead_fs = det.dead_time_ns * 1e6;
    if dead_fs > 0.0 && !times.is_empty() {
        let mut kept = Vec::with_capacity(times.len());
        let mut last = times[0];
        kept.push(last);
        for &t in &times[1..] {
            if t.diff_fs(last) >= dead_fs {
                kept.push(t);
                last = t;
            }
        }
        times = kept;
    }
    Ok(times)
}

/// Event-timer digitization: add the clock offset and round to the nearest
/// tick (halves round up). Ties after rounding are kept as duplicates.
pub fn digitize(times: &[PhotonTime], timer: &TimerSpec) -> Result<TagStream> {
    timer.validate()?;
    let res = timer.resolution_fs as i64;
    let mut tags = Vec::with_capacity(times.len());
    for t in times {
        let total = t
            .whole_fs
            .checked_add(timer.clock_offset_fs)
            .ok_or_else(|| {
                Error::Range(format!(
                    "timestamp {} fs overflows with clock offset",
                    t.whole_fs
                ))
            })?;
        let ticks = total.div_euclid(res);
        let rem = total.rem_euclid(res) as f64 + t.frac_fs;
        let ticks = ticks + (rem / res as f64 + 0.5).floor() as i64;
        let tag = ticks
            .checked_mul(res)
            .ok_or_else(|| Error::Range(format!("tick {ticks} overflows the 64-bit fs range")))?;
        tags.push(tag);
    }
    TagStream::from_sorted(tags, timer.resolution_fs, timer.site_id)
}

/// Full physical configuration of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub source: SourceParams,
    pub mode: CorrelationMode,
    /// Leg carrying the signal photon to site A.
    pub smf: DispersionLeg,
    /// Leg carrying the idler photon to site B.
    pub dcf: DispersionLeg,
    pub detector_a: DetectorSpec,
    pub detector_b: DetectorSpec,
    pub timer_a: TimerSpec,
    pub timer_b: TimerSpec,
    pub duration_s: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            source: SourceParams::default(),
            mode: CorrelationMode::Anti,
            smf: DispersionLeg::none(),
            dcf: DispersionLeg::none(),
            detector_a: DetectorSpec::default(),
            detector_b: DetectorSpec::default(),
            timer_a: TimerSpec::new(0),
            timer_b: TimerSpec::new(1),
            duration_s: 5.0,
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.smf.validate()?;
        self.dcf.validate()?;
        self.detector_a.validate()?;
        self.detector_b.validate()?;
        self.timer_a.validate()?;
        self.timer_b.validate()?;
        if !(self.duration_s >= 0.0) || !self.duration_s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration must be >= 0, got {}",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// Probability that a generated pair yields a detection at (A, B).
    pub fn detection_probabilities(&self) -> (f64, f64) {
        (
            self.smf.survival_probability() * self.detector_a.efficiency,
            self.dcf.survival_probability() * self.detector_b.efficiency,
        )
    }

    /// Adds insertion loss to the less lossy arm so both sites see the same
    /// photon rate, then sets the pair rate so each stream totals `target_hz`
    /// including dark counts.
    pub fn balance_rates(&mut self, target_hz: f64) -> Result<()> {
        let (pa, pb) = self.detection_probabilities();
        if !(pa > 0.0 && pb > 0.0) {
            return Err(Error::InvalidParameter(
                "an arm has zero detection probability".into(),
            ));
        }
        let extra_db = 10.0 * (pa / pb).abs().log10();
        if pa > pb {
            self.smf.insertion_loss_db += extra_db;
        } else if pb > pa {
            self.dcf.insertion_loss_db -= extra_db;
        }
        let (pa, _) = self.detection_probabilities();
        let dark = self
            .detector_a
            .dark_rate_hz
            .max(self.detector_b.dark_rate_hz);
        self.source.pair_rate_hz = (target_hz - dark).max(0.0) / pa;
        Ok(())
    }

    /// Fiber k″l of the two legs, ps².
    pub fn dispersions(&self) -> (f64, f64) {
        (self.smf.k2l_ps2(), self.dcf.k2l_ps2())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub a: TagStream,
    pub b: TagStream,
    pub pairs: usize,
}

/// Runs the whole chain for both sites.
pub fn simulate(exp: &Experiment, seed: u64) -> Result<SimulatedRun> {
    exp.validate()?;
    let pairs = generate_pairs(&exp.source, exp.mode, exp.duration_s, seed)?;
    let duration_fs = (exp.duration_s * FS_PER_S) as i64;

    let site = |leg: &DispersionLeg,
                det: &DetectorSpec,
                timer: &TimerSpec,
                arm: Arm|
     -> Result<TagStream> {
        let arrivals = propagate(&pairs, leg, arm, seed)?;
        let delay = leg.group_delay_fs().round() as i64;
        let times = detect(
            &arrivals,
            det,
            arm,
            (delay, delay.saturating_add(duration_fs)),
            seed,
        )?;
        digitize(&times, timer)
    };
    let (a, b) = rayon::join(
        || site(&exp.smf, &exp.detector_a, &exp.timer_a, Arm::Signal),
        || site(&exp.dcf, &exp.detector_b, &exp.timer_b, Arm::Idler),
    );
    Ok(SimulatedRun {
        a: a?,
        b: b?,
        pairs: pairs.len(),
    })
}
