//! Pulsed exciton/biexciton emitter.
//!
//! Excitations per pulse are Poisson with mean `power / sat_power_scale`.
//! An exciton photon needs at least one excitation, a biexciton photon needs
//! at least two and is emitted with a yield calibrated so that the biexciton
//! share equals `beta_ref` at `p_ref`. Brightness follows the single-emitter
//! saturation law `B∞ (1 - exp(-P / P_sat))`.

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// How photon emission times are drawn within one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmissionTiming {
    /// Each photon's clock starts at the pulse. Matches [`intensity`] exactly.
    #[default]
    Independent,
    /// The exciton photon of a pair is emitted after the biexciton photon.
    Cascade,
}

/// Two-state telegraph blinking. Rates are per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlinkingModel {
    pub rate_on_to_off: f64,
    pub rate_off_to_on: f64,
    pub off_brightness: f64,
}

impl BlinkingModel {
    pub fn validate(&self) -> Result<()> {
        require(
            self.rate_on_to_off >= 0.0 && self.rate_on_to_off.is_finite(),
            "blinking.rate_on_to_off",
            "must be a finite rate >= 0",
        )?;
        require(
            self.rate_off_to_on >= 0.0 && self.rate_off_to_on.is_finite(),
            "blinking.rate_off_to_on",
            "must be a finite rate >= 0",
        )?;
        require((0.0..=1.0).contains(&self.off_brightness), "blinking.off_brightness", "must lie in [0, 1]")?;
        require(
            self.rate_on_to_off + self.rate_off_to_on > 0.0 || self.rate_on_to_off == 0.0,
            "blinking",
            "at least one rate must be positive",
        )
    }

    /// Stationary probability of the ON state.
    pub fn on_probability(&self) -> f64 {
        let total = self.rate_on_to_off + self.rate_off_to_on;
        if total == 0.0 {
            1.0
        } else {
            self.rate_off_to_on / total
        }
    }

    /// Long-run emission scale relative to an emitter that never blinks.
    pub fn duty_factor(&self) -> f64 {
        let on = self.on_probability();
        on + (1.0 - on) * self.off_brightness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterModel {
    /// Biexciton decay constant (ns).
    pub tau_bx: f64,
    /// Exciton decay constant (ns).
    pub tau_x: f64,
    /// Biexciton share of emitted photons at `p_ref`.
    pub beta_ref: f64,
    /// Normalized power P/P_sat at which `beta_ref` holds.
    pub p_ref: f64,
    /// Saturation power in the units used for `power` (1 when powers are already P/P_sat).
    #[serde(default = "one")]
    pub sat_power_scale: f64,
    /// Asymptotic emitted photons per pulse, B∞.
    #[serde(default = "one")]
    pub brightness_max: f64,
    #[serde(default)]
    pub timing: EmissionTiming,
    #[serde(default)]
    pub blinking: Option<BlinkingModel>,
}

fn one() -> f64 {
    1.0
}

impl Default for EmitterModel {
    fn default() -> Self {
        Self::reference()
    }
}

impl EmitterModel {
    /// Room-temperature CdSeTe/ZnS dot: 2 ns biexciton, 138 ns exciton, 4 % at 5.8 P_sat.
    pub fn reference() -> Self {
        Self {
            tau_bx: 2.0,
            tau_x: 138.0,
            beta_ref: 0.04,
            p_ref: 5.8,
            sat_power_scale: 1.0,
            brightness_max: 1.0,
            timing: EmissionTiming::Independent,
            blinking: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.tau_bx > 0.0 && self.tau_bx.is_finite(), "emitter.tau_bx", "must be > 0")?;
        require(self.tau_x > 0.0 && self.tau_x.is_finite(), "emitter.tau_x", "must be > 0")?;
        require(self.tau_bx < self.tau_x, "emitter.tau_bx", "must be shorter than tau_x")?;
        require((0.0..1.0).contains(&self.beta_ref), "emitter.beta_ref", "must lie in [0, 1)")?;
        require(self.p_ref > 0.0 && self.p_ref.is_finite(), "emitter.p_ref", "must be > 0")?;
        require(
            self.sat_power_scale > 0.0 && self.sat_power_scale.is_finite(),
            "emitter.sat_power_scale",
            "must be > 0",
        )?;
        require((0.0..=1.0).contains(&self.brightness_max), "emitter.brightness_max", "must lie in [0, 1]")?;
        if let Some(b) = &self.blinking {
            b.validate()?;
        }
        // Pair probability beta*B must not exceed single-pulse budget.
        let beta_max = self.beta_at_power(1e6)?;
        require(beta_max < 0.5, "emitter.beta_ref", "implies a biexciton share >= 0.5 at high power")
    }

    fn mean_excitations(&self, power: f64) -> f64 {
        power / self.sat_power_scale
    }

    /// Biexciton photon yield, calibrated so that `beta_at_power(p_ref) == beta_ref`.
    pub fn biexciton_yield(&self) -> f64 {
        let n = self.mean_excitations(self.p_ref);
        let (p1, p2) = excitation_probabilities(n);
        if self.beta_ref == 0.0 {
            0.0
        } else {
            self.beta_ref * p1 / ((1.0 - self.beta_ref) * p2)
        }
    }

    /// Biexciton share of emitted photons at `power` (in P/P_sat units).
    pub fn beta_at_power(&self, power: f64) -> Result<f64> {
        check_power(power)?;
        let n = self.mean_excitations(power);
        let (p1, p2) = excitation_probabilities(n);
        if p1 == 0.0 {
            return Ok(0.0);
        }
        let bx = self.biexciton_yield() * p2;
        Ok(bx / (p1 + bx))
    }

    /// Emitted photons per pulse, before collection and detection.
    pub fn brightness(&self, power: f64) -> Result<f64> {
        check_power(power)?;
        Ok(self.brightness_max * (-(-self.mean_excitations(power)).exp_m1()))
    }

    /// Expected emitted photons per pulse including the blinking duty factor.
    pub fn expected_photons_per_pulse(&self, power: f64) -> Result<f64> {
        let duty = self.blinking.map_or(1.0, |b| b.duty_factor());
        Ok(self.brightness(power)? * duty)
    }

    /// Per-pulse probabilities of emitting a biexciton/exciton pair and a lone exciton.
    ///
    /// With `pair = beta B` and `single = B (1 - 2 beta)` the mean photon number is `B`
    /// and the biexciton share is `beta`.
    pub fn pulse_outcome_probabilities(&self, power: f64) -> Result<(f64, f64)> {
        let b = self.brightness(power)?;
        let beta = self.beta_at_power(power)?;
        Ok((beta * b, b * (1.0 - 2.0 * beta)))
    }

    /// Biexciton part of the emission-time density (1/ns).
    pub fn biexciton_density(&self, beta: f64, t: f64) -> f64 {
        beta * (-t / self.tau_bx).exp() / self.tau_bx
    }

    /// Exciton part of the emission-time density (1/ns).
    pub fn exciton_density(&self, beta: f64, t: f64) -> f64 {
        (1.0 - beta) * (-t / self.tau_x).exp() / self.tau_x
    }
}

/// Excitation pulse train. Pulses are instantaneous at `k * repetition_period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseTrainConfig {
    /// ns; 1000 for a 1 MHz laser.
    #[serde(default = "default_period")]
    pub repetition_period: f64,
    pub n_pulses: u64,
    /// Excitation power in units of P_sat.
    pub power_ratio: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_period() -> f64 {
    1000.0
}

impl Default for PulseTrainConfig {
    fn default() -> Self {
        Self::new(1_000_000, EmitterModel::reference().p_ref, 0)
    }
}

impl PulseTrainConfig {
    pub fn new(n_pulses: u64, power_ratio: f64, rng_seed: u64) -> Self {
        Self { repetition_period: default_period(), n_pulses, power_ratio, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.repetition_period > 0.0 && self.repetition_period.is_finite(),
            "train.repetition_period",
            "must be > 0",
        )?;
        require(self.n_pulses >= 1, "train.n_pulses", "must be >= 1")?;
        require(self.power_ratio > 0.0 && self.power_ratio.is_finite(), "train.power_ratio", "must be > 0")
    }

    /// Run duration in ns.
    pub fn duration(&self) -> f64 {
        self.n_pulses as f64 * self.repetition_period
    }
}

fn check_power(power: f64) -> Result<()> {
    if power > 0.0 && power.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("power must be > 0, got {power}")))
    }
}

/// P(N >= 1) and P(N >= 2) for Poisson-distributed excitations with mean `n`.
pub(crate) fn excitation_probabilities(n: f64) -> (f64, f64) {
    let p1 = -(-n).exp_m1();
    let p2 = p1 - n * (-n).exp();
    (p1, p2.max(0.0))
}

/// Normalized emission-time density: biexciton and exciton exponentials
/// weighted by the biexciton share at `power`.
pub fn intensity(model: &EmitterModel, power: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    let beta = model.beta_at_power(power)?;
    Ok(model.biexciton_density(beta, t) + model.exciton_density(beta, t))
}
