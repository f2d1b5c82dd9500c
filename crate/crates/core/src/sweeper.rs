//! Offset and power scans, the analytic g2 predictor, and the minimal-offset search.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, AnalysisSettings};
use crate::correlator::DEFAULT_SIDE_PEAKS;
use crate::emitter::{EmitterModel, PulseTrainConfig};
use crate::engine::{simulate, DetectionChain};
use crate::error::{require, Error, Result};
use crate::estimators::DecompositionOptions;
use crate::modulation::{gated_beta, gated_components, survival_fraction, ModulationWaveform};
use crate::rng::derive_seed;

/// Rising-edge family used by offset scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GateEdge {
    Heaviside,
    Smoothed { rise_time: f64 },
}

impl GateEdge {
    pub fn waveform(&self, t0: f64) -> ModulationWaveform {
        match *self {
            GateEdge::Heaviside => ModulationWaveform::heaviside(t0),
            GateEdge::Smoothed { rise_time } => ModulationWaveform::smoothed(t0, rise_time),
        }
    }

    fn rise_time(&self) -> f64 {
        match *self {
            GateEdge::Heaviside => 0.0,
            GateEdge::Smoothed { rise_time } => rise_time,
        }
    }
}

// ---------------------------------------------------------------------------
// Analytic HBT peak areas.

const GRID_STEP: f64 = 0.25;
const NEIGHBOURS: i64 = 3;

/// Arrival-time masses on a uniform grid from t = 0; `cdf[i]` is the mass in `[0, i·dt)`.
struct Grid {
    dt: f64,
    cdf: Vec<f64>,
}

impl Grid {
    fn from_masses(dt: f64, masses: &[f64]) -> Self {
        let mut cdf = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for m in masses {
            acc += m;
            cdf.push(acc);
        }
        Self { dt, cdf }
    }

    fn cells(&self) -> usize {
        self.cdf.len() - 1
    }

    fn total(&self) -> f64 {
        self.cdf[self.cells()]
    }

    fn cdf_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let f = x / self.dt;
        let i = f as usize;
        if i >= self.cells() {
            return self.total();
        }
        self.cdf[i] + (self.cdf[i + 1] - self.cdf[i]) * (f - i as f64)
    }

    fn scaled(&self, s: f64) -> Self {
        Self { dt: self.dt, cdf: self.cdf.iter().map(|c| c * s).collect() }
    }

    fn plus(&self, other: &Grid) -> Self {
        let n = self.cdf.len().max(other.cdf.len());
        let at = |g: &Grid, i: usize| g.cdf.get(i).copied().unwrap_or_else(|| g.total());
        Self { dt: self.dt, cdf: (0..n).map(|i| at(self, i) + at(other, i)).collect() }
    }
}

/// Expected number of (a, b) pairs with `t_a − t_b` in `[lo, hi)`.
fn pair_mass(a: &Grid, b: &Grid, lo: f64, hi: f64) -> f64 {
    let dt = b.dt;
    (0..b.cells())
        .map(|j| {
            let m = b.cdf[j + 1] - b.cdf[j];
            if m == 0.0 {
                return 0.0;
            }
            let t = (j as f64 + 0.5) * dt;
            m * (a.cdf_at(t + hi) - a.cdf_at(t + lo))
        })
        .sum()
}

/// Gated exponential decay of lifetime `tau` and unit initial mass.
fn gated_decay(tau: f64, w: &ModulationWaveform, horizon: f64) -> Grid {
    let n = (horizon / GRID_STEP).ceil() as usize;
    let masses: Vec<f64> = (0..n)
        .map(|i| {
            let a = i as f64 * GRID_STEP;
            let b = a + GRID_STEP;
            let m = (0..4).map(|k| w.transmission(a + (k as f64 + 0.5) * GRID_STEP / 4.0)).sum::<f64>() / 4.0;
            m * ((-a / tau).exp() - (-b / tau).exp())
        })
        .collect();
    Grid::from_masses(GRID_STEP, &masses)
}

/// Predicted coincidence areas per pulse, split into the signal part and the
/// pieces that scale with the dark-count rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakModel {
    pub period: f64,
    pub window: f64,
    /// Mean signal (emitter + leakage) clicks per pulse on each channel.
    pub signal_per_pulse: [f64; 2],
    /// Signal-signal coincidences per pulse in the centre window.
    pub center_signal: f64,
    /// Same, averaged over the side peaks.
    pub side_signal: f64,
}

impl PeakModel {
    /// Builds the signal part of the model.
    ///
    /// Emission times are treated as independent (no cascade ordering), jitter
    /// and dead time are neglected, and blinking enters only through its duty factor.
    pub fn new(
        emitter: &EmitterModel,
        power: f64,
        w: &ModulationWaveform,
        chain: &DetectionChain,
        period: f64,
        n_side: usize,
        window: f64,
    ) -> Result<Self> {
        emitter.validate()?;
        w.validate()?;
        chain.validate()?;
        require(period > 0.0, "period", "must be > 0")?;
        require(window > 0.0 && window <= period, "window", "must lie in (0, period]")?;
        require(n_side >= 1, "n_side_peaks", "must be >= 1")?;

        let (pair, single) = emitter.pulse_outcome_probabilities(power)?;
        let duty = emitter.blinking.map_or(1.0, |b| b.duty_factor());
        let (pair, single) = (pair * duty, single * duty);
        let eff = chain.efficiency;
        let r = [chain.splitter_ratio, 1.0 - chain.splitter_ratio];
        let cross = r[0] * r[1];

        let horizon = (emitter.tau_x * 50.0).max(period * (NEIGHBOURS as f64 + 1.0));
        let bx = gated_decay(emitter.tau_bx, w, horizon);
        let x = gated_decay(emitter.tau_x, w, horizon);
        let mut leak_mass = vec![0.0; bx.cells()];
        leak_mass[0] = chain.leakage_per_pulse * eff;
        let leak = Grid::from_masses(GRID_STEP, &leak_mass);

        // Per-pulse mean detected arrivals (before the splitter).
        let emitter_arrivals = bx.scaled(pair * eff).plus(&x.scaled((pair + single) * eff));
        let all = emitter_arrivals.plus(&leak);
        let per_pulse = all.total();

        let bx_d = bx.scaled(eff);
        let x_d = x.scaled(eff);
        let area = |peak: i64| -> f64 {
            let center = peak as f64 * period;
            let (lo, hi) = (center - window / 2.0, center + window / 2.0);
            let mut s = 0.0;
            for k in peak - NEIGHBOURS..=peak + NEIGHBOURS {
                let shift = k as f64 * period;
                if k != 0 {
                    s += pair_mass(&all, &all, lo - shift, hi - shift);
                }
            }
            if peak.abs() > NEIGHBOURS {
                return s * cross;
            }
            // Same pulse: only the photon pair from one emitter cycle, plus leakage.
            s += pair * (pair_mass(&bx_d, &x_d, lo, hi) + pair_mass(&x_d, &bx_d, lo, hi));
            s += pair_mass(&emitter_arrivals, &leak, lo, hi) + pair_mass(&leak, &emitter_arrivals, lo, hi);
            s += pair_mass(&leak, &leak, lo, hi);
            s * cross
        };
        let center_signal = area(0);
        let side_signal = (1..=n_side as i64).map(|k| area(k) + area(-k)).sum::<f64>() / (2 * n_side) as f64;
        Ok(Self { period, window, signal_per_pulse: [per_pulse * r[0], per_pulse * r[1]], center_signal, side_signal })
    }

    /// Coincidences added to every peak by darks at `dark_rate_per_ns` on each detector.
    pub fn dark_area(&self, dark_rate_per_ns: f64) -> f64 {
        let d = dark_rate_per_ns;
        let [s0, s1] = self.signal_per_pulse;
        d * self.window * (s0 + s1) + d * d * self.window * self.period
    }

    pub fn g2(&self, dark_rate_per_ns: f64) -> Result<f64> {
        let bg = self.dark_area(dark_rate_per_ns);
        let side = self.side_signal + bg;
        if side <= 0.0 {
            return Err(Error::UndefinedRatio("predicted side-peak area is zero".into()));
        }
        Ok((self.center_signal + bg) / side)
    }
}

/// Predicted g2(0) for a pulsed run, averaging `DEFAULT_SIDE_PEAKS` on each side.
pub fn predict_g2(
    emitter: &EmitterModel,
    power: f64,
    w: &ModulationWaveform,
    chain: &DetectionChain,
    period: f64,
    window: f64,
) -> Result<f64> {
    PeakModel::new(emitter, power, w, chain, period, DEFAULT_SIDE_PEAKS, window)?.g2(chain.dark_rate_per_ns())
}

/// Dark-count rate (counts/s per detector) at which the predicted g2(0) equals `target`.
pub fn tune_dark_rate(model: &PeakModel, target: f64) -> Result<f64> {
    let floor = model.g2(0.0)?;
    if !(target > floor && target < 1.0) {
        return Err(Error::UnreachableTarget { target, floor });
    }
    let (mut lo, mut hi) = (0.0_f64, 1e-3_f64);
    while model.g2(hi)? < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.g2(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi) * 1e9)
}

// ---------------------------------------------------------------------------
// Minimal offset.

fn predicted_low_count_g2(
    emitter: &EmitterModel,
    power: f64,
    w: &ModulationWaveform,
    chain: &DetectionChain,
    window: f64,
) -> Result<f64> {
    let beta = gated_beta(emitter, power, w)?;
    let (bx, x) = gated_components(emitter, power, w)?;
    let brightness = emitter.brightness(power)?;
    let p_sig = brightness * (bx + x) * chain.efficiency;
    let p_bg = 2.0 * chain.dark_rate_per_ns() * window + chain.leakage_per_pulse * chain.efficiency;
    if p_sig <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * beta + 2.0 * p_bg / p_sig)
}

/// Smallest gate offset on a 1 ns grid (from 0 to 10·τ_x) whose predicted
/// g2(0) = 2·β′ + 2·p_bg/p_sig does not exceed `target`.
///
/// `p_bg` counts darks on both detectors inside the default integration window plus leakage.
pub fn min_offset_for_target(
    emitter: &EmitterModel,
    power: f64,
    edge: GateEdge,
    target: f64,
    chain: &DetectionChain,
) -> Result<f64> {
    emitter.validate()?;
    chain.validate()?;
    require(target > 0.0 && target.is_finite(), "target_g2", "must be finite and > 0")?;
    let window = crate::correlator::DEFAULT_INTEGRATION_WINDOW;
    let last = (10.0 * emitter.tau_x).floor() as i64;
    let mut floor = f64::INFINITY;
    for t0 in 0..=last {
        let g = predicted_low_count_g2(emitter, power, &edge.waveform(t0 as f64), chain, window)?;
        if g <= target * (1.0 + 1e-12) {
            return Ok(t0 as f64);
        }
        floor = floor.min(g);
    }
    Err(Error::UnreachableTarget { target, floor })
}

// ---------------------------------------------------------------------------
// Sweeps.

/// How the dark-count rate is chosen for each sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DarkPolicy {
    /// Use the chain's rate as given.
    #[default]
    Fixed,
    /// Per row, set the rate so the predicted g2(0) equals `floor`.
    TuneToFloor { floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Free-form scenario name, set by callers that merge several sweeps.
    pub label: String,
    pub power: f64,
    pub t0: Option<f64>,
    pub waveform: String,
    pub dark_rate: f64,
    pub beta_analytic: Option<f64>,
    /// Biexciton share of gated photons, counted from the simulation's own labels.
    pub beta_truth: Option<f64>,
    pub beta_truth_sigma: Option<f64>,
    /// Biexciton share estimated from the waveform alone.
    pub beta_mc: Option<f64>,
    pub beta_mc_sigma: Option<f64>,
    pub g2_mc: Option<f64>,
    pub g2_sigma: Option<f64>,
    pub g2_predicted: Option<f64>,
    pub survival_analytic: Option<f64>,
    pub survival_mc: Option<f64>,
    pub survival_sigma: Option<f64>,
    pub counts_detected: u64,
    /// Problems met while filling the row, `;`-separated.
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(power: f64, t0: Option<f64>, w: &ModulationWaveform, dark_rate: f64) -> Self {
        Self {
            label: String::new(),
            power,
            t0,
            waveform: w.kind_name().to_string(),
            dark_rate,
            beta_analytic: None,
            beta_truth: None,
            beta_truth_sigma: None,
            beta_mc: None,
            beta_mc_sigma: None,
            g2_mc: None,
            g2_sigma: None,
            g2_predicted: None,
            survival_analytic: None,
            survival_mc: None,
            survival_sigma: None,
            counts_detected: 0,
            error: None,
        }
    }

    fn note(&mut self, e: impl std::fmt::Display) {
        let msg = e.to_string();
        self.error = Some(match self.error.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }
}

/// Settings shared by every row of a sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSettings {
    pub analysis: AnalysisSettings,
    pub dark: DarkPolicy,
}

fn evaluate_row(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    chain: &DetectionChain,
    w: &ModulationWaveform,
    t0: Option<f64>,
    settings: &SweepSettings,
) -> SweepRow {
    let power = train.power_ratio;
    let mut chain = chain.clone();
    let mut row = SweepRow::empty(power, t0, w, chain.dark_rate);
    let a = &settings.analysis;

    let model =
        PeakModel::new(emitter, power, w, &chain, train.repetition_period, a.n_side_peaks, a.integration_window);
    if let DarkPolicy::TuneToFloor { floor } = settings.dark {
        let zero_dark = DetectionChain { dark_rate: 0.0, ..chain.clone() };
        let signal_only = PeakModel::new(
            emitter,
            power,
            w,
            &zero_dark,
            train.repetition_period,
            a.n_side_peaks,
            a.integration_window,
        );
        match signal_only.and_then(|m| tune_dark_rate(&m, floor)) {
            Ok(rate) => {
                chain.dark_rate = rate;
                row.dark_rate = rate;
            }
            Err(e) => {
                row.note(e);
                return row;
            }
        }
    }
    match &model {
        Ok(m) => row.g2_predicted = m.g2(chain.dark_rate_per_ns()).ok(),
        Err(e) => row.note(e),
    }
    match gated_beta(emitter, power, w) {
        Ok(b) => row.beta_analytic = Some(b),
        Err(e) => row.note(e),
    }
    match survival_fraction(emitter, power, w) {
        Ok(s) => row.survival_analytic = Some(s),
        Err(e) => row.note(e),
    }

    let sim = match simulate(emitter, train, w, &chain) {
        Ok(s) => s,
        Err(e) => {
            row.note(e);
            return row;
        }
    };
    let summary = &sim.summary;
    row.counts_detected = summary.tags_written;
    if summary.emitted() > 0 {
        let (s, ds) = summary.survival();
        row.survival_mc = Some(s);
        row.survival_sigma = Some(ds);
    }
    if summary.gated() > 0 {
        let (b, db) = summary.gated_biexciton_share();
        row.beta_truth = Some(b);
        row.beta_truth_sigma = Some(db);
    }

    let background = DecompositionOptions::default()
        .with_dark_background(chain.dark_rate_per_ns(), 2, train.n_pulses, a.waveform_bin)
        .background_per_bin;
    match analyze(&sim.tags, train.repetition_period, w, background, a) {
        Ok(an) => {
            match an.g2 {
                Ok(g) => {
                    row.g2_mc = Some(g.g2_zero);
                    row.g2_sigma = Some(g.sigma);
                }
                Err(e) => row.note(format!("g2: {e}")),
            }
            match an.decomposition {
                Ok(d) => {
                    row.beta_mc = Some(d.beta_hat);
                    row.beta_mc_sigma = Some(d.beta_sigma);
                }
                Err(e) => row.note(format!("decomposition: {e}")),
            }
        }
        Err(e) => row.note(e),
    }
    row
}

fn run_rows(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    chain: &DetectionChain,
    settings: &SweepSettings,
    jobs: Vec<(f64, Option<f64>, ModulationWaveform)>,
) -> Vec<SweepRow> {
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (power, t0, w))| {
            let row_train =
                PulseTrainConfig { power_ratio: power, rng_seed: derive_seed(train.rng_seed, i as u64), ..*train };
            evaluate_row(emitter, &row_train, chain, &w, t0, settings)
        })
        .collect()
}

/// One row per gate offset at the train's power.
///
/// The unmodulated baseline of a smoothed edge is the offset `-rise_time`.
pub fn sweep_offset(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    chain: &DetectionChain,
    edge: GateEdge,
    offsets: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    emitter.validate()?;
    train.validate()?;
    chain.validate()?;
    let lo = -2.0 * edge.rise_time();
    let hi = 10.0 * emitter.tau_x;
    for &t0 in offsets {
        require(t0 >= lo && t0 <= hi, "offsets", "each offset must lie in [-2*rise_time, 10*tau_x]")?;
    }
    let jobs = offsets.iter().map(|&t0| (train.power_ratio, Some(t0), edge.waveform(t0))).collect();
    Ok(run_rows(emitter, train, chain, settings, jobs))
}

/// One row per excitation power with a fixed gate.
pub fn sweep_power(
    emitter: &EmitterModel,
    train: &PulseTrainConfig,
    chain: &DetectionChain,
    w: &ModulationWaveform,
    powers: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    emitter.validate()?;
    train.validate()?;
    chain.validate()?;
    w.validate()?;
    for &p in powers {
        require(p > 0.0 && p.is_finite(), "powers", "each power must be finite and > 0")?;
    }
    let jobs = powers.iter().map(|&p| (p, w.offset(), *w)).collect();
    Ok(run_rows(emitter, train, chain, settings, jobs))
}

pub const SWEEP_CSV_HEADER: &str =
    "label,power,t0_ns,waveform,dark_rate_cps,beta_analytic,beta_truth,beta_truth_sigma,\
beta_mc,beta_mc_sigma,g2_mc,g2_sigma,g2_predicted,survival_analytic,survival_mc,survival_sigma,counts_detected,error";

/// Writes rows as CSV after `# key=value` metadata lines.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], metadata: &[(String, String)], mut out: W) -> io::Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label.replace([',', '\n'], " "),
            r.power,
            opt(r.t0),
            r.waveform,
            r.dark_rate,
            opt(r.beta_analytic),
            opt(r.beta_truth),
            opt(r.beta_truth_sigma),
            opt(r.beta_mc),
            opt(r.beta_mc_sigma),
            opt(r.g2_mc),
            opt(r.g2_sigma),
            opt(r.g2_predicted),
            opt(r.survival_analytic),
            opt(r.survival_mc),
            opt(r.survival_sigma),
            r.counts_detected,
            err
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet() -> DetectionChain {
        DetectionChain { dark_rate: 0.0, ..DetectionChain::default() }
    }

    #[test]
    fn grid_pair_mass_of_two_exponentials() {
        // t_a - t_b for two independent Exp(tau) is Laplace(tau): P(|d| < 10) = 1 - e^{-10/tau}.
        let w = ModulationWaveform::None;
        let a = gated_decay(5.0, &w, 200.0);
        let p = pair_mass(&a, &a, -10.0, 10.0);
        assert_relative_eq!(p, 1.0 - (-2.0_f64).exp(), max_relative = 1e-3);
    }

    #[test]
    fn unmodulated_prediction_near_two_beta() {
        let m = EmitterModel::reference();
        let g = predict_g2(&m, m.p_ref, &ModulationWaveform::None, &quiet(), 1000.0, 200.0).unwrap();
        let beta = m.beta_at_power(m.p_ref).unwrap();
        let b = m.brightness(m.p_ref).unwrap();
        // 2β/B from the pair term, plus a little spill from neighbouring pulses.
        assert!(g > 2.0 * beta / b && g < 2.0 * beta / b + 0.005, "g2 {g}");
    }

    #[test]
    fn darks_raise_the_floor_monotonically() {
        let m = EmitterModel::reference();
        let pm = PeakModel::new(&m, 3.0, &ModulationWaveform::heaviside(45.0), &quiet(), 1000.0, 10, 200.0).unwrap();
        let mut prev = pm.g2(0.0).unwrap();
        for d in [1e-8, 1e-7, 1e-6, 1e-5] {
            let g = pm.g2(d).unwrap();
            assert!(g > prev);
            prev = g;
        }
        assert!(prev < 1.0);
    }

    #[test]
    fn tuning_hits_target() {
        let m = EmitterModel::reference();
        let pm = PeakModel::new(&m, 5.0, &ModulationWaveform::heaviside(45.0), &quiet(), 1000.0, 10, 200.0).unwrap();
        let rate = tune_dark_rate(&pm, 0.01).unwrap();
        assert_relative_eq!(pm.g2(rate * 1e-9).unwrap(), 0.01, max_relative = 1e-9);
        assert!(matches!(tune_dark_rate(&pm, 1e-6), Err(Error::UnreachableTarget { .. })));
    }

    #[test]
    fn min_offset_no_background() {
        let m = EmitterModel::reference();
        let ideal = DetectionChain::ideal();
        let t0 = min_offset_for_target(&m, m.p_ref, GateEdge::Heaviside, 0.02, &ideal).unwrap();
        // Brute-force scan of the closed form.
        let scan = (0..=1380)
            .find(|&t| 2.0 * gated_beta(&m, m.p_ref, &ModulationWaveform::heaviside(t as f64)).unwrap() <= 0.02)
            .unwrap();
        assert_eq!(t0, scan as f64);
        assert_eq!(t0, 3.0);
        assert_eq!(min_offset_for_target(&m, m.p_ref, GateEdge::Heaviside, 0.08, &ideal).unwrap(), 0.0);
    }

    #[test]
    fn min_offset_is_minimal_with_background() {
        let m = EmitterModel::reference();
        let chain = DetectionChain::default();
        let edge = GateEdge::Heaviside;
        let t0 = min_offset_for_target(&m, m.p_ref, edge, 0.01, &chain).unwrap();
        assert!(t0 > 0.0);
        let before = predicted_low_count_g2(&m, m.p_ref, &edge.waveform(t0 - 1.0), &chain, 200.0).unwrap();
        assert!(before > 0.01);
    }

    #[test]
    fn unreachable_target_reports_floor() {
        let m = EmitterModel::reference();
        let chain = DetectionChain { dark_rate: 1e5, ..DetectionChain::default() };
        match min_offset_for_target(&m, m.p_ref, GateEdge::Heaviside, 0.001, &chain) {
            Err(Error::UnreachableTarget { floor, .. }) => assert!(floor > 0.001),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_sweep_is_empty() {
        let m = EmitterModel::reference();
        let train = PulseTrainConfig::new(1000, m.p_ref, 1);
        let rows = sweep_offset(&m, &train, &quiet(), GateEdge::Heaviside, &[], &SweepSettings::default()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn offsets_out_of_range_rejected() {
        let m = EmitterModel::reference();
        let train = PulseTrainConfig::new(1000, m.p_ref, 1);
        let edge = GateEdge::Smoothed { rise_time: 50.0 };
        assert!(sweep_offset(&m, &train, &quiet(), edge, &[-101.0], &SweepSettings::default()).is_err());
        assert!(sweep_offset(&m, &train, &quiet(), edge, &[1381.0], &SweepSettings::default()).is_err());
    }

    #[test]
    fn rows_do_not_depend_on_order() {
        let m = EmitterModel::reference();
        let train = PulseTrainConfig::new(20_000, m.p_ref, 9);
        let s = SweepSettings::default();
        let a = sweep_offset(&m, &train, &quiet(), GateEdge::Heaviside, &[0.0, 20.0], &s).unwrap();
        let b = sweep_offset(&m, &train, &quiet(), GateEdge::Heaviside, &[0.0, 20.0], &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].t0, Some(20.0));
    }

    #[test]
    fn csv_has_metadata_and_blank_missing_fields() {
        let mut row = SweepRow::empty(1.0, None, &ModulationWaveform::None, 0.0);
        row.note("x, y");
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &[("seed".into(), "3".into())], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=3");
        assert_eq!(lines[1], SWEEP_CSV_HEADER);
        assert_eq!(lines[2].split(',').count(), SWEEP_CSV_HEADER.split(',').count());
        assert!(lines[2].starts_with(",1,,none,0,"));
    }
}
