//! Intensity-transmission functions of the acousto-optic gate.
//!
//! All times are in ns measured from the excitation pulse.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::emitter::EmitterModel;
use crate::error::{require, Result};
use crate::quadrature::integrate;

pub const DEFAULT_RISE_TIME: f64 = 50.0;
pub const DEFAULT_BIAS_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulationWaveform {
    #[default]
    None,
    HeavisideStep {
        t0: f64,
    },
    /// Raised-cosine ramp from `floor` at `t0` to 1 at `t0 + rise_time`.
    SmoothedStep {
        t0: f64,
        #[serde(default = "default_rise")]
        rise_time: f64,
        #[serde(default)]
        floor: f64,
    },
    /// `floor + (1 - floor) (1 - cos(2 pi f (t - t0))) / 2`; minimum at `t0`.
    BiasedSine {
        #[serde(default)]
        t0: f64,
        frequency: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// Fully open for the first `duty` fraction of each period after `t0`.
    BiasedSquare {
        #[serde(default)]
        t0: f64,
        period: f64,
        #[serde(default = "half")]
        duty: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
}

fn default_rise() -> f64 {
    DEFAULT_RISE_TIME
}
fn default_floor() -> f64 {
    DEFAULT_BIAS_FLOOR
}
fn half() -> f64 {
    0.5
}

impl ModulationWaveform {
    pub fn heaviside(t0: f64) -> Self {
        Self::HeavisideStep { t0 }
    }

    pub fn smoothed(t0: f64, rise_time: f64) -> Self {
        Self::SmoothedStep { t0, rise_time, floor: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let floor_ok = |f: f64| (0.0..=1.0).contains(&f);
        match *self {
            Self::None => Ok(()),
            Self::HeavisideStep { t0 } => require(t0.is_finite(), "waveform.t0", "must be finite"),
            Self::SmoothedStep { t0, rise_time, floor } => {
                require(t0.is_finite(), "waveform.t0", "must be finite")?;
                require(rise_time >= 0.0 && rise_time.is_finite(), "waveform.rise_time", "must be >= 0")?;
                require(floor_ok(floor), "waveform.floor", "must lie in [0, 1]")
            }
            Self::BiasedSine { t0, frequency, floor } => {
                require(t0.is_finite(), "waveform.t0", "must be finite")?;
                require(frequency > 0.0 && frequency.is_finite(), "waveform.frequency", "must be > 0")?;
                require(floor_ok(floor), "waveform.floor", "must lie in [0, 1]")
            }
            Self::BiasedSquare { t0, period, duty, floor } => {
                require(t0.is_finite(), "waveform.t0", "must be finite")?;
                require(period > 0.0 && period.is_finite(), "waveform.period", "must be > 0")?;
                require((0.0..=1.0).contains(&duty), "waveform.duty", "must lie in [0, 1]")?;
                require(floor_ok(floor), "waveform.floor", "must lie in [0, 1]")
            }
        }
    }

    /// Offset of the gate, if the waveform has one.
    pub fn offset(&self) -> Option<f64> {
        match *self {
            Self::None => None,
            Self::HeavisideStep { t0 }
            | Self::SmoothedStep { t0, .. }
            | Self::BiasedSine { t0, .. }
            | Self::BiasedSquare { t0, .. } => Some(t0),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::HeavisideStep { .. } => "heaviside_step",
            Self::SmoothedStep { .. } => "smoothed_step",
            Self::BiasedSine { .. } => "biased_sine",
            Self::BiasedSquare { .. } => "biased_square",
        }
    }

    /// Transmission m(t) in [0, 1].
    pub fn transmission(&self, t: f64) -> f64 {
        let m = match *self {
            Self::None => 1.0,
            Self::HeavisideStep { t0 } => {
                if t >= t0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::SmoothedStep { t0, rise_time, floor } => {
                if t <= t0 {
                    if rise_time == 0.0 && t == t0 {
                        1.0
                    } else {
                        floor
                    }
                } else if t >= t0 + rise_time {
                    1.0
                } else {
                    let x = (t - t0) / rise_time;
                    floor + (1.0 - floor) * 0.5 * (1.0 - (PI * x).cos())
                }
            }
            Self::BiasedSine { t0, frequency, floor } => {
                floor + (1.0 - floor) * 0.5 * (1.0 - (2.0 * PI * frequency * (t - t0)).cos())
            }
            Self::BiasedSquare { t0, period, duty, floor } => {
                let phase = (t - t0).rem_euclid(period);
                if phase < duty * period {
                    1.0
                } else {
                    floor
                }
            }
        };
        m.clamp(0.0, 1.0)
    }

    /// Points in `[lo, hi]` where m(t) or its derivative is discontinuous.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = match *self {
            Self::None => vec![],
            Self::HeavisideStep { t0 } => vec![t0],
            Self::SmoothedStep { t0, rise_time, .. } => vec![t0, t0 + rise_time],
            Self::BiasedSine { t0, frequency, .. } => {
                // Period boundaries keep the integrator's panels aligned with the oscillation.
                periodic_points(t0, 1.0 / frequency, 0.0, lo, hi)
            }
            Self::BiasedSquare { t0, period, duty, .. } => {
                let mut p = periodic_points(t0, period, 0.0, lo, hi);
                p.extend(periodic_points(t0, period, duty * period, lo, hi));
                p
            }
        };
        pts.retain(|&p| p >= lo && p <= hi);
        pts
    }
}

fn periodic_points(t0: f64, period: f64, shift: f64, lo: f64, hi: f64) -> Vec<f64> {
    let first = ((lo - t0 - shift) / period).floor() as i64;
    let last = ((hi - t0 - shift) / period).ceil() as i64;
    (first..=last).map(|k| t0 + shift + k as f64 * period).collect()
}

const QUAD_TOL: f64 = 1e-12;

fn horizon(model: &EmitterModel) -> f64 {
    50.0 * model.tau_x
}

/// Gated (biexciton, exciton) photon fractions: the integrals of m times each
/// emission component, relative to all emitted photons.
pub fn gated_components(model: &EmitterModel, power: f64, w: &ModulationWaveform) -> Result<(f64, f64)> {
    let beta = model.beta_at_power(power)?;
    match *w {
        ModulationWaveform::None => Ok((beta, 1.0 - beta)),
        ModulationWaveform::HeavisideStep { t0 } => {
            let t0 = t0.max(0.0);
            Ok((beta * (-t0 / model.tau_bx).exp(), (1.0 - beta) * (-t0 / model.tau_x).exp()))
        }
        _ => gated_components_numeric(model, power, w),
    }
}

/// Quadrature route for [`gated_components`], valid for every waveform kind.
pub fn gated_components_numeric(model: &EmitterModel, power: f64, w: &ModulationWaveform) -> Result<(f64, f64)> {
    let beta = model.beta_at_power(power)?;
    let hi = horizon(model);
    let bps = w.breakpoints(0.0, hi);
    let bx_hi = (50.0 * model.tau_bx).min(hi);
    let bx_bps: Vec<f64> = bps.iter().copied().filter(|&p| p < bx_hi).collect();
    let bx = integrate(|t| w.transmission(t) * model.biexciton_density(beta, t), 0.0, bx_hi, &bx_bps, QUAD_TOL)?;
    let x = integrate(|t| w.transmission(t) * model.exciton_density(beta, t), 0.0, hi, &bps, QUAD_TOL)?;
    Ok((bx, x))
}

/// Expected fraction of emitted photons transmitted by the gate.
pub fn survival_fraction(model: &EmitterModel, power: f64, w: &ModulationWaveform) -> Result<f64> {
    let (bx, x) = gated_components(model, power, w)?;
    Ok(bx + x)
}

/// Biexciton share among photons transmitted by the gate.
pub fn gated_beta(model: &EmitterModel, power: f64, w: &ModulationWaveform) -> Result<f64> {
    let (bx, x) = gated_components(model, power, w)?;
    if bx + x == 0.0 {
        return Ok(0.0);
    }
    Ok(bx / (bx + x))
}
