//! Standard analysis of one tag stream: waveform, HBT histogram, g2(0) and
//! biexponential decomposition with shared settings.

use serde::{Deserialize, Serialize};

use crate::correlator::{
    default_span, g2_zero, hbt_correlate, waveform_histogram_from, G2Result, HbtHistogram, WaveformHistogram,
    DEFAULT_HBT_BIN, DEFAULT_INTEGRATION_WINDOW, DEFAULT_SIDE_PEAKS, DEFAULT_WAVEFORM_BIN,
};
use crate::engine::TimeTag;
use crate::error::Result;
use crate::estimators::{biexciton_fraction_with, BiexpDecomposition, DecompositionOptions, DEFAULT_TAIL_START};
use crate::modulation::ModulationWaveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    pub waveform_bin: f64,
    /// Start of the first waveform bin relative to the pulse (ns).
    pub waveform_origin: f64,
    pub tail_start: f64,
    pub hbt_bin: f64,
    pub n_side_peaks: usize,
    pub integration_window: f64,
    /// HBT span; defaults to just enough for `n_side_peaks`.
    pub span: Option<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            waveform_bin: DEFAULT_WAVEFORM_BIN,
            waveform_origin: -10.0,
            tail_start: DEFAULT_TAIL_START,
            hbt_bin: DEFAULT_HBT_BIN,
            n_side_peaks: DEFAULT_SIDE_PEAKS,
            integration_window: DEFAULT_INTEGRATION_WINDOW,
            span: None,
        }
    }
}

impl AnalysisSettings {
    pub fn span_for(&self, period: f64) -> f64 {
        self.span.unwrap_or_else(|| default_span(period, self.n_side_peaks))
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub waveform: WaveformHistogram,
    pub hbt: Result<HbtHistogram>,
    pub g2: Result<G2Result>,
    pub decomposition: Result<BiexpDecomposition>,
}

/// Runs every analysis step; individual failures are kept in their slot.
pub fn analyze(
    tags: &[TimeTag],
    period: f64,
    gate: &ModulationWaveform,
    background_per_bin: f64,
    settings: &AnalysisSettings,
) -> Result<Analysis> {
    let waveform = waveform_histogram_from(tags, period, settings.waveform_bin, settings.waveform_origin)?;
    let opts = DecompositionOptions { start: settings.tail_start, gate: *gate, background_per_bin };
    let decomposition = biexciton_fraction_with(&waveform, &opts);
    let hbt = hbt_correlate(tags, settings.span_for(period), settings.hbt_bin);
    let g2 = hbt
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|h| g2_zero(h, period, settings.n_side_peaks, settings.integration_window));
    Ok(Analysis { waveform, hbt, g2, decomposition })
}
