//! Arrival-time and HBT cross-correlation histograms, and pulsed g2(0).
//!
//! Times inside histograms are handled in integer picoseconds; the public
//! surface speaks nanoseconds.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::TimeTag;
use crate::error::{Error, Result};

pub const DEFAULT_WAVEFORM_BIN: f64 = 1.0;
pub const DEFAULT_HBT_BIN: f64 = 2.0;
pub const DEFAULT_SIDE_PEAKS: usize = 10;
/// Peak integration window (ns). Wide enough to hold half of a 138 ns photon's
/// delay distribution, narrow enough that the tails of neighbouring pulses
/// contribute only ~0.2 % of a side peak to the zero-delay window.
pub const DEFAULT_INTEGRATION_WINDOW: f64 = 200.0;

/// Smallest span that fully contains `n_side_peaks` side peaks.
pub fn default_span(period: f64, n_side_peaks: usize) -> f64 {
    (n_side_peaks as f64 + 0.5) * period
}

fn ps(t_ns: f64) -> i64 {
    (t_ns * 1000.0).round() as i64
}

/// Arrival-time histogram folded on the repetition period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformHistogram {
    pub bin_width: f64,
    /// Time since the pulse at which bin 0 starts. Tags whose folded phase
    /// precedes the origin wrap to the end of the previous period.
    pub origin: f64,
    pub period: f64,
    pub bins: Vec<u64>,
    pub total: u64,
}

impl WaveformHistogram {
    pub fn bin_start(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.bin_width
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.origin + (k as f64 + 0.5) * self.bin_width
    }

    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# histogram=waveform")?;
        writeln!(out, "# bin_width_ns={}", self.bin_width)?;
        writeln!(out, "# origin_ns={}", self.origin)?;
        writeln!(out, "# period_ns={}", self.period)?;
        writeln!(out, "# total={}", self.total)?;
        writeln!(out, "bin_start_ns,count")?;
        for (k, c) in self.bins.iter().enumerate() {
            writeln!(out, "{},{}", self.bin_start(k), c)?;
        }
        Ok(())
    }
}

/// Folds tags on `period` into bins of `bin_width` starting at time-since-pulse 0.
pub fn waveform_histogram(tags: &[TimeTag], period: f64, bin_width: f64) -> Result<WaveformHistogram> {
    waveform_histogram_from(tags, period, bin_width, 0.0)
}

/// As [`waveform_histogram`] with bin 0 starting at `origin` ns after the pulse.
/// A small negative origin keeps jittered early photons out of the last bin.
pub fn waveform_histogram_from(
    tags: &[TimeTag],
    period: f64,
    bin_width: f64,
    origin: f64,
) -> Result<WaveformHistogram> {
    if !(period > 0.0) || !(bin_width > 0.0) {
        return Err(Error::Domain("period and bin width must be > 0".into()));
    }
    let n_bins = (period / bin_width).round().max(1.0) as usize;
    let (period_ps, bw_ps, origin_ps) = (ps(period), ps(bin_width), ps(origin));
    let mut bins = vec![0u64; n_bins];
    for t in tags {
        let phase = (t.timestamp as i64 - origin_ps).rem_euclid(period_ps);
        let k = ((phase / bw_ps) as usize).min(n_bins - 1);
        bins[k] += 1;
    }
    Ok(WaveformHistogram { bin_width, origin, period, bins, total: tags.len() as u64 })
}

/// Coincidence counts versus delay `t(channel 0) - t(channel 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbtHistogram {
    pub bin_width: f64,
    /// Delays in `[-span, span]` are counted.
    pub span: f64,
    pub bins: Vec<u64>,
}

impl HbtHistogram {
    /// All-zero histogram covering `[-span, span]`.
    pub fn empty(span: f64, bin_width: f64) -> Self {
        let n = ((2 * ps(span)) as f64 / ps(bin_width) as f64).ceil().max(1.0) as usize;
        Self { bin_width, span, bins: vec![0; n] }
    }

    pub fn bin_start(&self, k: usize) -> f64 {
        -self.span + k as f64 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    #[inline]
    fn index(&self, delay_ps: i64, span_ps: i64, bw_ps: i64) -> usize {
        (((delay_ps + span_ps) / bw_ps) as usize).min(self.bins.len() - 1)
    }

    fn add(&mut self, other: &HbtHistogram) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }

    /// Counts in bins lying entirely within `[center - window/2, center + window/2]`.
    pub fn area(&self, center: f64, window: f64) -> u64 {
        let (lo, hi) = (ps(center - 0.5 * window), ps(center + 0.5 * window));
        let (span_ps, bw_ps) = (ps(self.span), ps(self.bin_width));
        self.bins
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let start = -span_ps + *k as i64 * bw_ps;
                start >= lo && start + bw_ps <= hi
            })
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# histogram=hbt")?;
        writeln!(out, "# delay_convention=channel0_minus_channel1")?;
        writeln!(out, "# bin_width_ns={}", self.bin_width)?;
        writeln!(out, "# span_ns={}", self.span)?;
        writeln!(out, "# total={}", self.total())?;
        writeln!(out, "bin_start_ns,count")?;
        for (k, c) in self.bins.iter().enumerate() {
            writeln!(out, "{},{}", self.bin_start(k), c)?;
        }
        Ok(())
    }
}

fn split_channels(tags: &[TimeTag]) -> Result<(Vec<i64>, Vec<i64>)> {
    let mut c0 = Vec::new();
    let mut c1 = Vec::new();
    for t in tags {
        match t.channel {
            0 => c0.push(t.timestamp as i64),
            1 => c1.push(t.timestamp as i64),
            _ => {}
        }
    }
    if c0.is_empty() {
        return Err(Error::MissingChannel(0));
    }
    if c1.is_empty() {
        return Err(Error::MissingChannel(1));
    }
    // Input is time-sorted overall; per-channel order follows, but stay safe for hand-built streams.
    if !c0.windows(2).all(|w| w[0] <= w[1]) {
        c0.sort_unstable();
    }
    if !c1.windows(2).all(|w| w[0] <= w[1]) {
        c1.sort_unstable();
    }
    Ok((c0, c1))
}

fn correlate_chunk(c0: &[i64], c1: &[i64], span: f64, bin_width: f64) -> HbtHistogram {
    let mut h = HbtHistogram::empty(span, bin_width);
    let (span_ps, bw_ps) = (ps(span), ps(bin_width));
    let Some(&first) = c0.first() else { return h };
    let mut lo = c1.partition_point(|&t| t < first - span_ps);
    for &t0 in c0 {
        while lo < c1.len() && c1[lo] < t0 - span_ps {
            lo += 1;
        }
        for &t1 in &c1[lo..] {
            let delay = t0 - t1;
            if delay < -span_ps {
                break;
            }
            let k = h.index(delay, span_ps, bw_ps);
            h.bins[k] += 1;
        }
    }
    h
}

/// Channel-0 tags per parallel work unit.
const CHUNK: usize = 1 << 15;

/// Cross-correlates channel 0 against channel 1 with a sliding window.
pub fn hbt_correlate(tags: &[TimeTag], span: f64, bin_width: f64) -> Result<HbtHistogram> {
    hbt_correlate_chunked(tags, span, bin_width, CHUNK)
}

/// [`hbt_correlate`] with an explicit partition size for channel 0. The result
/// does not depend on `chunk`.
pub fn hbt_correlate_chunked(tags: &[TimeTag], span: f64, bin_width: f64, chunk: usize) -> Result<HbtHistogram> {
    if !(span > 0.0) || !(bin_width > 0.0) {
        return Err(Error::Domain("span and bin width must be > 0".into()));
    }
    let (c0, c1) = split_channels(tags)?;
    let partial: Vec<HbtHistogram> =
        c0.par_chunks(chunk.max(1)).map(|part| correlate_chunk(part, &c1, span, bin_width)).collect();
    let mut h = HbtHistogram::empty(span, bin_width);
    for p in &partial {
        h.add(p);
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Result {
    pub g2_zero: f64,
    pub sigma: f64,
    pub center_area: u64,
    /// Side peaks ordered from `-n_side_peaks` to `+n_side_peaks`, skipping 0.
    pub side_areas: Vec<u64>,
}

impl G2Result {
    pub fn mean_side(&self) -> f64 {
        self.side_areas.iter().sum::<u64>() as f64 / self.side_areas.len() as f64
    }
}

/// Pulsed g2(0): zero-delay peak area over the mean of the side-peak areas.
pub fn g2_zero(h: &HbtHistogram, period: f64, n_side_peaks: usize, window: f64) -> Result<G2Result> {
    if n_side_peaks == 0 {
        return Err(Error::Domain("at least one side peak is required".into()));
    }
    if !(window > 0.0) || window > period * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("integration window {window} must lie in (0, period={period}]")));
    }
    let needed = (n_side_peaks as f64 + 0.5) * period;
    if h.span < needed * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "histogram span {} ns is shorter than {needed} ns needed for {n_side_peaks} side peaks",
            h.span
        )));
    }
    let center = h.area(0.0, window);
    let side_areas: Vec<u64> = (1..=n_side_peaks)
        .rev()
        .map(|k| -(k as f64))
        .chain((1..=n_side_peaks).map(|k| k as f64))
        .map(|k| h.area(k * period, window))
        .collect();
    let side_sum: u64 = side_areas.iter().sum();
    if side_sum == 0 {
        return Err(Error::UndefinedRatio("all side peaks are empty".into()));
    }
    let mean = side_sum as f64 / side_areas.len() as f64;
    let g2 = center as f64 / mean;
    // Independent Poisson errors on the centre area and the side-peak sum.
    let sigma = (center as f64 / (mean * mean) + g2 * g2 / side_sum as f64).sqrt();
    Ok(G2Result { g2_zero: g2, sigma, center_area: center, side_areas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tag(ch: u8, t_ns: f64) -> TimeTag {
        TimeTag::new(ch, (t_ns * 1000.0).round() as u64)
    }

    fn brute_force(tags: &[TimeTag], span: f64, bw: f64) -> HbtHistogram {
        let mut h = HbtHistogram::empty(span, bw);
        let (span_ps, bw_ps) = (ps(span), ps(bw));
        for a in tags.iter().filter(|t| t.channel == 0) {
            for b in tags.iter().filter(|t| t.channel == 1) {
                let d = a.timestamp as i64 - b.timestamp as i64;
                if d.abs() <= span_ps {
                    let k = h.index(d, span_ps, bw_ps);
                    h.bins[k] += 1;
                }
            }
        }
        h
    }

    #[test]
    fn single_tag_lands_in_expected_bin() {
        let h = waveform_histogram(&[tag(0, 3000.0 + 7.2)], 1000.0, 1.0).unwrap();
        assert_eq!(h.bins.len(), 1000);
        assert_eq!(h.bins[7], 1);
        assert_eq!(h.total, 1);
    }

    #[test]
    fn empty_input_gives_empty_histogram() {
        let h = waveform_histogram(&[], 1000.0, 1.0).unwrap();
        assert_eq!(h.total, 0);
        assert!(h.bins.iter().all(|&c| c == 0));
    }

    #[test]
    fn negative_origin_keeps_early_jitter() {
        let tags = [tag(0, 999.6), tag(1, 2000.3)];
        let h = waveform_histogram_from(&tags, 1000.0, 1.0, -5.0).unwrap();
        // 999.6 is 0.4 ns before pulse 1.
        assert_eq!(h.bins[4], 1);
        assert_eq!(h.bins[5], 1);
        assert_eq!(h.bin_start(4), -1.0);
    }

    #[test]
    fn identical_timestamps_are_zero_delay() {
        let tags: Vec<TimeTag> = (0..50).flat_map(|k| [tag(0, k as f64 * 777.0), tag(1, k as f64 * 777.0)]).collect();
        let h = hbt_correlate(&tags, 10.0, 2.0).unwrap();
        assert_eq!(h.total(), 50);
        assert_eq!(h.area(0.0, 4.0), 50);
        assert_eq!(h.bins[h.bins.len() / 2], 50);
    }

    #[test]
    fn missing_channel_is_named() {
        let tags = [tag(0, 1.0), tag(0, 2.0)];
        assert_eq!(hbt_correlate(&tags, 10.0, 1.0).unwrap_err(), Error::MissingChannel(1));
        let tags = [tag(1, 1.0)];
        assert_eq!(hbt_correlate(&tags, 10.0, 1.0).unwrap_err(), Error::MissingChannel(0));
    }

    #[test]
    fn g2_arithmetic_and_poisson_sigma() {
        // One side peak each side holding 200: mean over two sides = 200 would give 0.04;
        // emulate four sides of 100 with n_side_peaks=2.
        let mut h = HbtHistogram::empty(2500.0, 2.0);
        let (span_ps, bw_ps) = (ps(h.span), ps(h.bin_width));
        let mut put = |d_ns: f64, n: u64| {
            let k = h.index(ps(d_ns), span_ps, bw_ps);
            h.bins[k] += n;
        };
        put(0.5, 8);
        for c in [-2000.0, -1000.0, 1000.0, 2000.0] {
            put(c + 0.5, 100);
        }
        let g = g2_zero(&h, 1000.0, 2, 1000.0).unwrap();
        assert_eq!(g.center_area, 8);
        assert_eq!(g.side_areas, vec![100, 100, 100, 100]);
        assert!((g.g2_zero - 0.08).abs() < 1e-12);
        let expected_sigma = 0.08 * (1.0f64 / 8.0 + 1.0 / 400.0).sqrt();
        assert!((g.sigma - expected_sigma).abs() < 1e-12);
        assert!((g.sigma - 0.029).abs() < 1e-3);
    }

    #[test]
    fn g2_requires_side_counts_and_span() {
        let h = HbtHistogram::empty(10_500.0, 2.0);
        assert!(matches!(g2_zero(&h, 1000.0, 10, 1000.0), Err(Error::UndefinedRatio(_))));
        assert!(matches!(g2_zero(&h, 1000.0, 11, 1000.0), Err(Error::Domain(_))));
        assert!(matches!(g2_zero(&h, 1000.0, 5, 1500.0), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_poisson_histogram() {
        use rand::Rng;
        let mut rng = crate::rng::stream(5, 0, crate::rng::Purpose::Emission);
        // Rate 0.01/ns per channel over 1e6 ns.
        let mut tags: Vec<TimeTag> = (0..2)
            .flat_map(|ch| {
                let mut t = 0.0;
                let mut v = Vec::new();
                loop {
                    t += -(1.0 - rng.gen::<f64>()).ln() / 0.01;
                    if t > 1e6 {
                        break v;
                    }
                    v.push(tag(ch, t));
                }
            })
            .collect();
        tags.sort();
        let h = hbt_correlate(&tags, 200.0, 2.0).unwrap();
        let mean = 0.01 * 0.01 * 1e6 * 2.0;
        let inner = &h.bins[10..h.bins.len() - 10];
        let avg = inner.iter().sum::<u64>() as f64 / inner.len() as f64;
        assert!((avg - mean).abs() < 3.0 * (mean / inner.len() as f64).sqrt() + 0.5, "{avg} vs {mean}");
    }

    fn tag_stream() -> impl Strategy<Value = Vec<TimeTag>> {
        prop::collection::vec((0u8..2, 0u64..5_000_000), 2..400).prop_map(|v| {
            let mut t: Vec<TimeTag> = v.into_iter().map(|(c, ts)| TimeTag::new(c, ts)).collect();
            t.push(TimeTag::new(0, 1));
            t.push(TimeTag::new(1, 2));
            t.sort();
            t
        })
    }

    proptest! {
        #[test]
        fn sliding_window_equals_brute_force(tags in tag_stream(), chunk in 1usize..50) {
            let fast = hbt_correlate_chunked(&tags, 1500.0, 2.0, chunk).unwrap();
            let slow = brute_force(&tags, 1500.0, 2.0);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn translation_invariance(tags in tag_stream(), shift in 0u64..10_000_000) {
            let moved: Vec<TimeTag> = tags.iter().map(|t| TimeTag::new(t.channel, t.timestamp + shift)).collect();
            prop_assert_eq!(hbt_correlate(&tags, 1500.0, 2.0).unwrap(), hbt_correlate(&moved, 1500.0, 2.0).unwrap());
        }

        #[test]
        fn channel_swap_keeps_peak_areas(raw in prop::collection::vec((0u8..2, 0u64..20_000_000), 50..600)) {
            // Even channel-0 and odd channel-1 timestamps keep every delay off a bin edge.
            let mut tags: Vec<TimeTag> = raw
                .into_iter()
                .map(|(c, t)| TimeTag::new(c, (t & !1) | c as u64))
                .collect();
            tags.push(TimeTag::new(0, 0));
            tags.push(TimeTag::new(1, 1));
            tags.sort();
            let swapped: Vec<TimeTag> = tags.iter().map(|t| TimeTag::new(1 - t.channel, t.timestamp)).collect();
            let a = hbt_correlate(&tags, 3500.0, 2.0).unwrap();
            let b = hbt_correlate(&swapped, 3500.0, 2.0).unwrap();
            let ra = g2_zero(&a, 1000.0, 3, 600.0);
            let rb = g2_zero(&b, 1000.0, 3, 600.0);
            match (ra, rb) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x.center_area, y.center_area);
                    let mut ys = y.side_areas.clone();
                    ys.reverse();
                    prop_assert_eq!(x.side_areas, ys);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "swap changed feasibility"),
            }
        }
    }
}
