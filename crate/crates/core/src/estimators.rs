//! Biexponential decomposition of arrival-time histograms.
//!
//! The slow (exciton) component is fitted as a single exponential on the late
//! part of the waveform, extrapolated back to every bin and subtracted; what
//! remains before the fit start is attributed to the biexciton.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::correlator::WaveformHistogram;
use crate::error::{Error, Result};
use crate::modulation::ModulationWaveform;

/// Tail fits start here unless told otherwise (ns).
pub const DEFAULT_TAIL_START: f64 = 100.0;
/// Bins with fewer counts are left out of log-space fits.
pub const MIN_BIN_COUNT: f64 = 5.0;
pub const MIN_TAIL_BINS: usize = 10;

/// Weighted straight-line fit `y = intercept + slope * x` with known per-point variances 1/w.
#[derive(Debug, Clone, Copy)]
struct LineFit {
    intercept: f64,
    slope: f64,
    /// Covariance of (intercept, slope).
    cov: [[f64; 2]; 2],
    chi2: f64,
    n: usize,
}

fn weighted_line(points: &[(f64, f64, f64)]) -> Option<LineFit> {
    let (mut s0, mut s1, mut s2, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, w) in points {
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        sy += w * y;
        sxy += w * x * y;
    }
    let det = s0 * s2 - s1 * s1;
    if points.len() < 2 || !(det > 0.0) {
        return None;
    }
    let intercept = (s2 * sy - s1 * sxy) / det;
    let slope = (s0 * sxy - s1 * sy) / det;
    let chi2 = points.iter().map(|&(x, y, w)| w * (y - intercept - slope * x).powi(2)).sum();
    Some(LineFit { intercept, slope, cov: [[s2 / det, -s1 / det], [-s1 / det, s0 / det]], chi2, n: points.len() })
}

/// Single-exponential fit `amplitude * exp(-t / tau)` (amplitude in counts per bin at t = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub amplitude: f64,
    pub tau: f64,
    pub bins_used: usize,
    /// Pearson chi^2 per degree of freedom.
    pub reduced_chi2: f64,
    /// Covariance of (ln amplitude, -1/tau).
    cov: [[f64; 2]; 2],
}

impl TailFit {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.tau).exp()
    }
}

/// Fits the tail of a decay trace given as bin centres and counts.
///
/// Bins whose centre precedes `start` or where the gate is closed are skipped.
/// The model per bin is `background + m(t) * amplitude * exp(-t / tau)`. A
/// log-space weighted line through bins with at least [`MIN_BIN_COUNT`] counts
/// seeds a Poisson maximum-likelihood refinement over all tail bins.
pub fn tail_fit_series(
    times: &[f64],
    counts: &[f64],
    start: f64,
    gate: &ModulationWaveform,
    background_per_bin: f64,
) -> Result<TailFit> {
    if !(start >= 0.0) {
        return Err(Error::Domain(format!("tail start must be >= 0, got {start}")));
    }
    let tail: Vec<(f64, f64, f64)> = times
        .iter()
        .zip(counts)
        .filter(|(&t, _)| t >= start)
        .filter_map(|(&t, &c)| {
            let m = gate.transmission(t);
            (m > 0.0).then_some((t, c, m))
        })
        .collect();
    let points: Vec<(f64, f64, f64)> = tail
        .iter()
        .filter(|&&(_, c, _)| c >= MIN_BIN_COUNT && c > background_per_bin)
        .map(|&(t, c, m)| {
            let signal = c - background_per_bin;
            // Var(ln signal) ~ c / signal^2 for Poisson counts.
            (t, (signal / m).ln(), signal * signal / c)
        })
        .collect();
    if points.len() < MIN_TAIL_BINS {
        return Err(Error::InsufficientData(format!(
            "{} bins after {start} ns hold >= {MIN_BIN_COUNT} counts; at least {MIN_TAIL_BINS} are required",
            points.len()
        )));
    }
    let seed = weighted_line(&points).ok_or_else(|| Error::InsufficientData("tail bins are degenerate".into()))?;
    let fit = poisson_refine(&tail, background_per_bin, seed);
    if !(fit.slope < 0.0) {
        return Err(Error::InsufficientData("tail does not decay".into()));
    }
    Ok(TailFit {
        amplitude: fit.intercept.exp(),
        tau: -1.0 / fit.slope,
        bins_used: fit.n,
        reduced_chi2: if fit.n > 2 { fit.chi2 / (fit.n - 2) as f64 } else { 0.0 },
        cov: fit.cov,
    })
}

/// Fisher-scoring maximisation of the Poisson likelihood of `(t, count, m)` bins
/// under `b + m * exp(intercept + slope * t)`. Falls back to `seed` if the
/// information matrix is singular.
fn poisson_refine(bins: &[(f64, f64, f64)], b: f64, seed: LineFit) -> LineFit {
    let t_ref = bins.iter().map(|p| p.0).sum::<f64>() / bins.len() as f64;
    // Centred parameters: ln amplitude at t_ref, slope.
    let mut p = [seed.intercept + seed.slope * t_ref, seed.slope];
    let nll = |p: [f64; 2]| -> f64 {
        bins.iter()
            .map(|&(t, c, m)| {
                let mu = b + m * (p[0] + p[1] * (t - t_ref)).exp();
                if c > 0.0 {
                    mu - c * mu.ln()
                } else {
                    mu
                }
            })
            .sum()
    };
    let info_and_grad = |p: [f64; 2]| {
        let (mut i, mut g) = ([[0.0; 2]; 2], [0.0; 2]);
        for &(t, c, m) in bins {
            let x = t - t_ref;
            let s = m * (p[0] + p[1] * x).exp();
            let mu = b + s;
            let d = [s, s * x];
            let r = c / mu - 1.0;
            for a in 0..2 {
                g[a] += r * d[a];
                for k in 0..2 {
                    i[a][k] += d[a] * d[k] / mu;
                }
            }
        }
        (i, g)
    };
    let invert = |i: [[f64; 2]; 2]| {
        let det = i[0][0] * i[1][1] - i[0][1] * i[1][0];
        (det > 0.0).then(|| [[i[1][1] / det, -i[0][1] / det], [-i[1][0] / det, i[0][0] / det]])
    };

    let mut current = nll(p);
    for _ in 0..100 {
        let (i, g) = info_and_grad(p);
        let Some(inv) = invert(i) else { return seed };
        let step = [inv[0][0] * g[0] + inv[0][1] * g[1], inv[1][0] * g[0] + inv[1][1] * g[1]];
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [p[0] + scale * step[0], p[1] + scale * step[1]];
            let v = nll(trial);
            if v.is_finite() && v <= current {
                p = trial;
                current = v;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || (step[0].abs() < 1e-12 && step[1].abs() * t_ref.max(1.0) < 1e-12) {
            break;
        }
    }
    let (i, _) = info_and_grad(p);
    let Some(c) = invert(i) else { return seed };
    let chi2 = bins
        .iter()
        .map(|&(t, cnt, m)| {
            let mu = b + m * (p[0] + p[1] * (t - t_ref)).exp();
            (cnt - mu).powi(2) / mu
        })
        .sum();
    // Back to (ln amplitude at t = 0, slope).
    let c00 = c[0][0] - 2.0 * t_ref * c[0][1] + t_ref * t_ref * c[1][1];
    let c01 = c[0][1] - t_ref * c[1][1];
    LineFit { intercept: p[0] - p[1] * t_ref, slope: p[1], cov: [[c00, c01], [c01, c[1][1]]], chi2, n: bins.len() }
}

fn centers_and_counts(h: &WaveformHistogram) -> (Vec<f64>, Vec<f64>) {
    let t = (0..h.bins.len()).map(|k| h.bin_center(k)).collect();
    let c = h.bins.iter().map(|&c| c as f64).collect();
    (t, c)
}

/// Single-exponential fit of the histogram beyond `start` ns.
pub fn tail_fit(h: &WaveformHistogram, start: f64) -> Result<TailFit> {
    tail_fit_gated(h, start, &ModulationWaveform::None)
}

pub fn tail_fit_gated(h: &WaveformHistogram, start: f64, gate: &ModulationWaveform) -> Result<TailFit> {
    let (t, c) = centers_and_counts(h);
    tail_fit_series(&t, &c, start, gate, 0.0)
}

/// Inputs of the decomposition beyond the histogram itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionOptions {
    /// Tail fit start (ns).
    pub start: f64,
    /// Gate the waveform was recorded through.
    pub gate: ModulationWaveform,
    /// Known uncorrelated background per bin, e.g. dark counts.
    pub background_per_bin: f64,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        Self { start: DEFAULT_TAIL_START, gate: ModulationWaveform::None, background_per_bin: 0.0 }
    }
}

impl DecompositionOptions {
    pub fn gated(start: f64, gate: ModulationWaveform) -> Self {
        Self { start, gate, background_per_bin: 0.0 }
    }

    /// Flat background from detector dark counts: each folded bin collects
    /// `bin_width` ns of every pulse period from every channel.
    pub fn with_dark_background(
        mut self,
        dark_rate_per_ns: f64,
        channels: usize,
        n_pulses: u64,
        bin_width: f64,
    ) -> Self {
        self.background_per_bin = dark_rate_per_ns * channels as f64 * n_pulses as f64 * bin_width;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionBin {
    pub t: f64,
    pub total: f64,
    pub slow: f64,
    /// `max(0, total - background - slow)`.
    pub fast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiexpDecomposition {
    pub a_fast: f64,
    /// `None` when the fast residual is nowhere significant.
    pub tau_fast: Option<f64>,
    pub a_slow: f64,
    pub tau_slow: f64,
    pub beta_hat: f64,
    pub beta_sigma: f64,
    pub tail_fit_start: f64,
    /// Reduced chi^2 of the tail fit.
    pub fit_residual: f64,
    /// Negative residual mass removed by per-bin clamping, relative to the total.
    pub clamped_fraction: f64,
    pub background_per_bin: f64,
    /// Background-subtracted total counts.
    pub total: f64,
    pub bins: Vec<DecompositionBin>,
}

impl BiexpDecomposition {
    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# decomposition=biexponential")?;
        writeln!(out, "# beta_hat={}", self.beta_hat)?;
        writeln!(out, "# beta_sigma={}", self.beta_sigma)?;
        writeln!(out, "# a_slow={}", self.a_slow)?;
        writeln!(out, "# tau_slow_ns={}", self.tau_slow)?;
        writeln!(out, "# a_fast={}", self.a_fast)?;
        match self.tau_fast {
            Some(t) => writeln!(out, "# tau_fast_ns={t}")?,
            None => writeln!(out, "# tau_fast_ns=undefined")?,
        }
        writeln!(out, "# tail_fit_start_ns={}", self.tail_fit_start)?;
        writeln!(out, "# fit_reduced_chi2={}", self.fit_residual)?;
        writeln!(out, "# clamped_fraction={}", self.clamped_fraction)?;
        writeln!(out, "# background_per_bin={}", self.background_per_bin)?;
        writeln!(out, "t_ns,total,slow,fast")?;
        for b in &self.bins {
            writeln!(out, "{},{},{},{}", b.t, b.total, b.slow, b.fast)?;
        }
        Ok(())
    }
}

/// Decomposes an ungated waveform into exciton and biexciton parts.
pub fn biexciton_fraction(h: &WaveformHistogram, start: f64) -> Result<BiexpDecomposition> {
    biexciton_fraction_with(h, &DecompositionOptions { start, ..Default::default() })
}

/// Decomposition of a waveform recorded through a gate: the extrapolated slow
/// component is multiplied by the gate transmission.
pub fn biexciton_fraction_with(h: &WaveformHistogram, opts: &DecompositionOptions) -> Result<BiexpDecomposition> {
    let (times, counts) = centers_and_counts(h);
    decompose(&times, &counts, opts)
}

/// Decomposition of an arbitrary binned decay trace.
pub fn decompose(times: &[f64], counts: &[f64], opts: &DecompositionOptions) -> Result<BiexpDecomposition> {
    let (start, gate, bg) = (opts.start, &opts.gate, opts.background_per_bin);
    let tail = tail_fit_series(times, counts, start, gate, bg)?;
    let slow_at = |t: f64| if t >= 0.0 { tail.at(t) * gate.transmission(t) } else { 0.0 };

    let total: f64 = counts.iter().map(|c| c - bg).sum();
    if total <= 0.0 {
        return Err(Error::InsufficientData("no counts above background".into()));
    }
    let mut bins = Vec::with_capacity(counts.len());
    let (mut residual_sum, mut pre_counts, mut clamped) = (0.0, 0.0, 0.0);
    // d(sum of slow over the fast region) / d(ln A, -1/tau)
    let (mut grad_a, mut grad_b) = (0.0, 0.0);
    for (&t, &c) in times.iter().zip(counts) {
        let slow = slow_at(t);
        let r = c - bg - slow;
        if t < start {
            residual_sum += r;
            pre_counts += c;
            clamped += (-r).max(0.0);
            grad_a += slow;
            grad_b += t * slow;
        }
        bins.push(DecompositionBin { t, total: c, slow, fast: r.max(0.0) });
    }
    // The sum runs over signed residuals: clamping every bin would turn the
    // Poisson noise of the subtracted slow component into a positive bias.
    let beta_hat = (residual_sum / total).clamp(0.0, 1.0);
    let c = &tail.cov;
    let var_slow = grad_a * grad_a * c[0][0] + 2.0 * grad_a * grad_b * c[0][1] + grad_b * grad_b * c[1][1];
    let beta_sigma = (pre_counts + var_slow).max(0.0).sqrt() / total;

    let (a_fast, tau_fast) = fit_fast(&bins, start, tail.tau);

    Ok(BiexpDecomposition {
        a_fast,
        tau_fast,
        a_slow: tail.amplitude,
        tau_slow: tail.tau,
        beta_hat,
        beta_sigma,
        tail_fit_start: start,
        fit_residual: tail.reduced_chi2,
        clamped_fraction: clamped / total,
        background_per_bin: bg,
        total,
        bins,
    })
}

/// Fits the fast residual on bins where it exceeds three Poisson sigmas,
/// starting at its maximum so that the jitter-smeared rise is left out.
fn fit_fast(bins: &[DecompositionBin], start: f64, tau_slow: f64) -> (f64, Option<f64>) {
    let significant = |b: &DecompositionBin| b.t < start && b.total > 0.0 && b.fast > 3.0 * b.total.sqrt();
    let Some(peak) = bins
        .iter()
        .enumerate()
        .filter(|(_, b)| significant(b))
        .max_by(|x, y| x.1.fast.partial_cmp(&y.1.fast).unwrap())
        .map(|(i, _)| i)
    else {
        return (0.0, None);
    };
    // Timing jitter reshapes the rising edge, so the peak bin itself is left out.
    let points: Vec<(f64, f64, f64)> = bins[peak + 1..]
        .iter()
        .filter(|b| significant(b))
        .map(|b| (b.t, b.fast.ln(), b.fast * b.fast / b.total))
        .collect();
    if points.len() < 3 {
        return (bins[peak].fast, None);
    }
    match weighted_line(&points) {
        Some(f) if f.slope < 0.0 && -1.0 / f.slope < tau_slow => (f.intercept.exp(), Some(-1.0 / f.slope)),
        _ => (bins[peak].fast, None),
    }
}

/// Pulsed g2(0) implied by a biexciton share, valid for small shares.
pub fn g2_from_beta(beta: f64) -> Result<f64> {
    if (0.0..0.5).contains(&beta) {
        Ok(2.0 * beta)
    } else {
        Err(Error::Domain(format!("biexciton share must lie in [0, 0.5), got {beta}")))
    }
}
