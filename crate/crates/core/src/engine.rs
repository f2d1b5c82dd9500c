//! Monte Carlo generation of time-tagged detection records.
//!
//! Pulses are processed in fixed-size batches. Each batch owns independent
//! random streams (see [`crate::rng`]) for emission, gating and detection, so
//! serial and parallel runs produce the same merged tag stream.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::{EmissionTiming, EmitterModel, PulseTrainConfig};
use crate::error::{require, Result};
use crate::modulation::ModulationWaveform;
use crate::rng::{stream, Purpose};

/// Pulses per random-stream batch.
pub const BATCH_PULSES: u64 = 1 << 16;

/// Laser pulse width used for leakage arrival times (ns).
const LEAKAGE_PULSE_WIDTH: f64 = 0.063;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonKind {
    Exciton,
    Biexciton,
    Dark,
    Leakage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonEvent {
    pub pulse_index: u64,
    pub kind: PhotonKind,
    /// ns after the pulse.
    pub emit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionChain {
    /// Collection efficiency times detector quantum efficiency.
    pub efficiency: f64,
    /// Probability a detected photon is routed to channel 0.
    pub splitter_ratio: f64,
    /// Gaussian timing jitter, ns.
    pub jitter_sigma: f64,
    /// Dark counts per second per detector.
    pub dark_rate: f64,
    /// Mean excitation-laser leakage photons per pulse reaching the detection optics.
    pub leakage_per_pulse: f64,
    /// Per-detector dead time, ns. May be infinite.
    pub dead_time: f64,
}

impl Default for DetectionChain {
    fn default() -> Self {
        Self {
            efficiency: 0.12,
            splitter_ratio: 0.5,
            jitter_sigma: 0.35,
            dark_rate: 100.0,
            leakage_per_pulse: 0.0,
            dead_time: 50.0,
        }
    }
}

impl DetectionChain {
    /// Lossless, noiseless chain: every photon detected, no background, no dead time.
    pub fn ideal() -> Self {
        Self { efficiency: 1.0, jitter_sigma: 0.0, dark_rate: 0.0, dead_time: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        require((0.0..=1.0).contains(&self.efficiency), "chain.efficiency", "must lie in [0, 1]")?;
        require((0.0..=1.0).contains(&self.splitter_ratio), "chain.splitter_ratio", "must lie in [0, 1]")?;
        require(
            self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite(),
            "chain.jitter_sigma",
            "must be finite and >= 0",
        )?;
        require(self.dark_rate >= 0.0 && self.dark_rate.is_finite(), "chain.dark_rate", "must be finite and >= 0")?;
        require(
            self.leakage_per_pulse >= 0.0 && self.leakage_per_pulse.is_finite(),
            "chain.leakage_per_pulse",
            "must be finite and >= 0",
        )?;
        require(self.dead_time >= 0.0, "chain.dead_time", "must be >= 0")
    }

    /// Dark-count rate in counts per ns.
    pub fn dark_rate_per_ns(&self) -> f64 {
        self.dark_rate * 1e-9
    }
}

/// One detector click: channel and absolute timestamp in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub timestamp: u64,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(channel: u8, timestamp: u64) -> Self {
        Self { timestamp, channel }
    }

    pub fn time_ns(&self) -> f64 {
        self.timestamp as f64 * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RawTag {
    tag: TimeTag,
    kind: PhotonKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pulses: u64,
    pub emitted_exciton: u64,
    pub emitted_biexciton: u64,
    pub gated_exciton: u64,
    pub gated_biexciton: u64,
    pub gate_rejected: u64,
    /// Signal photons detected before dead-time removal.
    pub detected_signal: u64,
    pub leakage_detected: u64,
    pub dark_counts: u64,
    pub dead_time_losses: u64,
    /// Final tags by originating kind: exciton, biexciton, dark, leakage.
    pub tags_by_kind: [u64; 4],
    pub tags_per_channel: [u64; 2],
    pub tags_written: u64,
}

impl RunSummary {
    pub fn emitted(&self) -> u64 {
        self.emitted_exciton + self.emitted_biexciton
    }

    pub fn gated(&self) -> u64 {
        self.gated_exciton + self.gated_biexciton
    }

    /// Fraction of emitted photons transmitted by the gate, with binomial sigma.
    pub fn survival(&self) -> (f64, f64) {
        binomial(self.gated(), self.emitted())
    }

    /// Biexciton share among gated photons, with binomial sigma.
    pub fn gated_biexciton_share(&self) -> (f64, f64) {
        binomial(self.gated_biexciton, self.gated())
    }

    fn merge(&mut self, other: &RunSummary) {
        self.pulses += other.pulses;
        self.emitted_exciton += other.emitted_exciton;
        self.emitted_biexciton += other.emitted_biexciton;
        self.gated_exciton += other.gated_exciton;
        self.gated_biexciton += other.gated_biexciton;
        self.gate_rejected += other.gate_rejected;
        self.detected_signal += other.detected_signal;
        self.leakage_detected += other.leakage_detected;
        self.dark_counts += other.dark_counts;
    }
}

/// Proportion and its binomial sigma; the variance is floored at 1/n so that
/// all-or-nothing outcomes still carry an uncertainty of about 1/n.
fn binomial(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let (p, n) = (k as f64 / n as f64, n as f64);
    (p, ((p * (1.0 - p)).max(1.0 / n) / n).sqrt())
}

fn kind_index(kind: PhotonKind) -> usize {
    match kind {
        PhotonKind::Exciton => 0,
        PhotonKind::Biexciton => 1,
        PhotonKind::Dark => 2,
        PhotonKind::Leakage => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Time-sorted tags from both channels.
    pub tags: Vec<TimeTag>,
    pub summary: RunSummary,
}

/// ON/OFF switching times of the blinking telegraph over the whole run.
struct BlinkTimeline {
    /// Sorted switch times (ns); the state flips at each.
    switches: Vec<f64>,
    start_on: bool,
    off_brightness: f64,
}

impl BlinkTimeline {
    fn generate(emitter: &EmitterModel, train: &PulseTrainConfig) -> Option<Self> {
        let b = emitter.blinking?;
        let mut rng = stream(train.rng_seed, u64::MAX, Purpose::Blinking);
        let mut on = rng.gen::<f64>() < b.on_probability();
        let start_on = on;
        let end = train.duration();
        let mut t = 0.0;
        let mut switches = Vec::new();
        loop {
            let rate = if on { b.rate_on_to_off } else { b.rate_off_to_on } * 1e-9;
            if rate <= 0.0 {
                break;
            }
            t += Exp::new(rate).unwrap().sample(&mut rng);
            if t >= end {
                break;
            }
            switches.push(t);
            on = !on;
        }
        Some(Self { switches, start_on, off_brightness: b.off_brightness })
    }

    fn scale_at(&self, t: f64) -> f64 {
        let flips = self.switches.partition_point(|&s| s <= t);
        let on = self.start_on ^ (flips % 2 == 1);
        if on {
            1.0
        } else {
            self.off_brightness
        }
    }
}

/// Samples emission events for pulses `lo..hi`.
fn emit_batch<R: Rng>(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    probs: (f64, f64),
    blink: Option<&BlinkTimeline>,
    lo: u64,
    hi: u64,
    rng: &mut R,
) -> Vec<PhotonEvent> {
    let (pair, single) = probs;
    let exp_bx = Exp::new(1.0 / emitter.tau_bx).unwrap();
    let exp_x = Exp::new(1.0 / emitter.tau_x).unwrap();
    let mut out = Vec::with_capacity(((hi - lo) as f64 * (2.0 * pair + single) * 1.1) as usize + 16);
    for pulse in lo..hi {
        let scale = blink.map_or(1.0, |b| b.scale_at(pulse as f64 * train.repetition_period));
        let u: f64 = rng.gen();
        if u < pair * scale {
            let bx = exp_bx.sample(rng);
            let x = match emitter.timing {
                EmissionTiming::Independent => exp_x.sample(rng),
                EmissionTiming::Cascade => bx + exp_x.sample(rng),
            };
            out.push(PhotonEvent { pulse_index: pulse, kind: PhotonKind::Biexciton, emit_time: bx });
            out.push(PhotonEvent { pulse_index: pulse, kind: PhotonKind::Exciton, emit_time: x });
        } else if u < (pair + single) * scale {
            let x = exp_x.sample(rng);
            out.push(PhotonEvent { pulse_index: pulse, kind: PhotonKind::Exciton, emit_time: x });
        }
    }
    out
}

/// Keeps each event independently with probability m(emit_time).
pub fn thin<R: Rng>(events: &[PhotonEvent], w: &ModulationWaveform, rng: &mut R) -> Vec<PhotonEvent> {
    if matches!(w, ModulationWaveform::None) {
        return events.to_vec();
    }
    events
        .iter()
        .filter(|e| {
            let m = w.transmission(e.emit_time);
            if m >= 1.0 {
                true
            } else if m <= 0.0 {
                false
            } else {
                rng.gen::<f64>() < m
            }
        })
        .copied()
        .collect()
}

fn to_picoseconds(t_ns: f64) -> u64 {
    (t_ns.max(0.0) * 1000.0).round() as u64
}

/// Detection of one batch (pulses `lo..hi`), before dead-time removal.
fn detect_batch<R: Rng, D: Rng>(
    events: &[PhotonEvent],
    chain: &DetectionChain,
    period: f64,
    lo: u64,
    hi: u64,
    rng: &mut R,
    dark_rng: &mut D,
) -> Vec<RawTag> {
    let jitter = (chain.jitter_sigma > 0.0).then(|| Normal::new(0.0, chain.jitter_sigma).unwrap());
    let mut out = Vec::with_capacity((events.len() as f64 * chain.efficiency * 1.2) as usize + 16);

    let click = |rng: &mut R, out: &mut Vec<RawTag>, pulse: u64, t: f64, kind: PhotonKind| {
        if rng.gen::<f64>() >= chain.efficiency {
            return;
        }
        let channel = if rng.gen::<f64>() < chain.splitter_ratio { 0 } else { 1 };
        let j = jitter.map_or(0.0, |n| n.sample(rng));
        let ts = to_picoseconds(pulse as f64 * period + t + j);
        out.push(RawTag { tag: TimeTag::new(channel, ts), kind });
    };

    for e in events {
        click(rng, &mut out, e.pulse_index, e.emit_time, e.kind);
    }

    if chain.leakage_per_pulse > 0.0 {
        let poisson = Poisson::new(chain.leakage_per_pulse).unwrap();
        let arrival = Exp::new(1.0 / LEAKAGE_PULSE_WIDTH).unwrap();
        for pulse in lo..hi {
            let n = poisson.sample(rng) as u64;
            for _ in 0..n {
                let t = arrival.sample(rng).min(period);
                click(rng, &mut out, pulse, t, PhotonKind::Leakage);
            }
        }
    }

    if chain.dark_rate > 0.0 {
        let gap = Exp::new(chain.dark_rate_per_ns()).unwrap();
        let (start, end) = (lo as f64 * period, hi as f64 * period);
        for channel in 0..2u8 {
            let mut t = start + gap.sample(dark_rng);
            while t < end {
                out.push(RawTag { tag: TimeTag::new(channel, to_picoseconds(t)), kind: PhotonKind::Dark });
                t += gap.sample(dark_rng);
            }
        }
    }
    out
}

/// Removes tags that arrive within `dead_time` of the previous kept tag on the same channel.
/// Input must be time-sorted.
fn apply_dead_time(tags: Vec<RawTag>, dead_time: f64) -> (Vec<RawTag>, u64) {
    if dead_time <= 0.0 {
        return (tags, 0);
    }
    let dead_ps = if dead_time.is_finite() { (dead_time * 1000.0).round() as u64 } else { u64::MAX };
    let mut ready_at: [Option<u64>; 2] = [None, None];
    let before = tags.len();
    let kept: Vec<RawTag> = tags
        .into_iter()
        .filter(|r| {
            let ch = r.tag.channel as usize;
            match ready_at[ch] {
                Some(t) if r.tag.timestamp < t => false,
                _ => {
                    ready_at[ch] = Some(r.tag.timestamp.saturating_add(dead_ps));
                    true
                }
            }
        })
        .collect();
    let lost = (before - kept.len()) as u64;
    (kept, lost)
}

fn finish(mut raw: Vec<RawTag>, chain: &DetectionChain, mut summary: RunSummary) -> Simulation {
    raw.sort_by_key(|r| (r.tag.timestamp, r.tag.channel));
    let (kept, lost) = apply_dead_time(raw, chain.dead_time);
    summary.dead_time_losses = lost;
    for r in &kept {
        summary.tags_by_kind[kind_index(r.kind)] += 1;
        summary.tags_per_channel[r.tag.channel as usize] += 1;
    }
    summary.tags_written = kept.len() as u64;
    Simulation { tags: kept.into_iter().map(|r| r.tag).collect(), summary }
}

/// Detection chain applied to an arbitrary event list covering all pulses of `train`.
///
/// Random draws come from batch 0 of the train's seed.
pub fn detect(events: &[PhotonEvent], chain: &DetectionChain, train: &PulseTrainConfig) -> Vec<TimeTag> {
    let mut rng = stream(train.rng_seed, 0, Purpose::Detection);
    let mut dark = stream(train.rng_seed, 0, Purpose::Dark);
    let raw = detect_batch(events, chain, train.repetition_period, 0, train.n_pulses, &mut rng, &mut dark);
    finish(raw, chain, RunSummary::default()).tags
}

pub fn simulate(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    w: &ModulationWaveform,
    chain: &DetectionChain,
) -> Result<Simulation> {
    simulate_with(emitter, train, w, chain, Execution::Parallel)
}

pub fn simulate_with(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    w: &ModulationWaveform,
    chain: &DetectionChain,
    exec: Execution,
) -> Result<Simulation> {
    emitter.validate()?;
    train.validate()?;
    w.validate()?;
    chain.validate()?;

    let probs = emitter.pulse_outcome_probabilities(train.power_ratio)?;
    let blink = BlinkTimeline::generate(emitter, train);
    let n_batches = train.n_pulses.div_ceil(BATCH_PULSES);

    let run_batch = |b: u64| -> (Vec<RawTag>, RunSummary) {
        let lo = b * BATCH_PULSES;
        let hi = (lo + BATCH_PULSES).min(train.n_pulses);
        let seed = train.rng_seed;
        let events = emit_batch(emitter, train, probs, blink.as_ref(), lo, hi, &mut stream(seed, b, Purpose::Emission));
        let gated = thin(&events, w, &mut stream(seed, b, Purpose::Thinning));

        let mut s = RunSummary { pulses: hi - lo, ..Default::default() };
        for e in &events {
            match e.kind {
                PhotonKind::Biexciton => s.emitted_biexciton += 1,
                _ => s.emitted_exciton += 1,
            }
        }
        for e in &gated {
            match e.kind {
                PhotonKind::Biexciton => s.gated_biexciton += 1,
                _ => s.gated_exciton += 1,
            }
        }
        s.gate_rejected = (events.len() - gated.len()) as u64;

        let raw = detect_batch(
            &gated,
            chain,
            train.repetition_period,
            lo,
            hi,
            &mut stream(seed, b, Purpose::Detection),
            &mut stream(seed, b, Purpose::Dark),
        );
        for r in &raw {
            match r.kind {
                PhotonKind::Dark => s.dark_counts += 1,
                PhotonKind::Leakage => s.leakage_detected += 1,
                _ => s.detected_signal += 1,
            }
        }
        (raw, s)
    };

    let batches: Vec<(Vec<RawTag>, RunSummary)> = match exec {
        Execution::Serial => (0..n_batches).map(run_batch).collect(),
        Execution::Parallel => (0..n_batches).into_par_iter().map(run_batch).collect(),
    };

    let mut summary = RunSummary::default();
    let mut raw = Vec::with_capacity(batches.iter().map(|b| b.0.len()).sum());
    for (tags, s) in batches {
        summary.merge(&s);
        raw.extend(tags);
    }
    Ok(finish(raw, chain, summary))
}
