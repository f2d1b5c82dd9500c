//! Simulation and analysis of temporally gated single photons from pulsed
//! room-temperature quantum-dot emitters.
//!
//! The pipeline is: [`emitter`] (what the dot emits) → [`modulation`] (the
//! acousto-optic gate) → [`engine`] (Monte Carlo time tags) → [`correlator`]
//! and [`estimators`] (waveforms, HBT histograms, g2(0), biexciton share) →
//! [`sweeper`] (parameter scans). Every Monte Carlo quantity has an analytic
//! counterpart in `emitter`, `modulation` or `sweeper::predict_g2`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod correlator;
pub mod emitter;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod modulation;
pub mod qtt1;
mod quadrature;
pub mod rng;
pub mod sweeper;

pub use emitter::{intensity, BlinkingModel, EmissionTiming, EmitterModel, PulseTrainConfig};
pub use engine::{simulate, simulate_with, DetectionChain, Execution, RunSummary, Simulation, TimeTag};
pub use error::{Error, Result};
pub use modulation::{gated_beta, survival_fraction, ModulationWaveform};
