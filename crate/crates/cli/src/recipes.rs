//! Bundled sweeps for the standard purification studies.

use clap::ValueEnum;
use qdpurify::rng::derive_seed;
use qdpurify::sweeper::{sweep_offset, sweep_power, DarkPolicy, GateEdge, SweepRow, SweepSettings};
use qdpurify::{DetectionChain, EmitterModel, ModulationWaveform, PulseTrainConfig, Result};

pub const DEFAULT_RECIPE_PULSES: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    /// Offset scan of the reference dot, smoothed and ideal step edges.
    Fig3,
    /// Offset scan of five dots at 6.7 P_sat.
    Fig4a,
    /// Power scan, unmodulated and gated at 45 ns with darks tuned to a 0.01 floor.
    Fig4b,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Fig3 => "fig3",
            Recipe::Fig4a => "fig4a",
            Recipe::Fig4b => "fig4b",
        }
    }
}

/// (label, tau_bx, tau_x, beta at 6.7 P_sat)
const DOTS: [(&str, f64, f64, f64); 5] = [
    ("dot1", 1.6, 112.0, 0.020),
    ("dot2", 2.0, 125.0, 0.025),
    ("dot3", 2.4, 138.0, 0.030),
    ("dot4", 2.8, 150.0, 0.035),
    ("dot5", 3.2, 164.0, 0.040),
];

const SMOOTH: GateEdge = GateEdge::Smoothed { rise_time: 50.0 };

fn labelled(mut rows: Vec<SweepRow>, label: &str) -> Vec<SweepRow> {
    for r in &mut rows {
        r.label = label.to_string();
    }
    rows
}

pub fn run(recipe: Recipe, seed: u64, pulses: u64) -> Result<Vec<SweepRow>> {
    let reference = EmitterModel::reference();
    let chain = DetectionChain::default();
    let settings = SweepSettings::default();
    let train = |power: f64, k: u64| PulseTrainConfig::new(pulses, power, derive_seed(seed, k));
    let mut rows = Vec::new();
    match recipe {
        Recipe::Fig3 => {
            let offsets = [-50.0, 0.0, 5.0, 10.0, 16.0, 20.0, 30.0, 45.0];
            let p = reference.p_ref;
            rows.extend(labelled(
                sweep_offset(&reference, &train(p, 0), &chain, SMOOTH, &offsets, &settings)?,
                "smoothed",
            ));
            rows.extend(labelled(
                sweep_offset(&reference, &train(p, 1), &chain, GateEdge::Heaviside, &offsets[1..], &settings)?,
                "heaviside",
            ));
        }
        Recipe::Fig4a => {
            let offsets = [-50.0, 16.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0];
            for (k, &(label, tau_bx, tau_x, beta)) in DOTS.iter().enumerate() {
                let dot = EmitterModel { tau_bx, tau_x, beta_ref: beta, p_ref: 6.7, ..EmitterModel::reference() };
                rows.extend(labelled(
                    sweep_offset(&dot, &train(6.7, k as u64), &chain, SMOOTH, &offsets, &settings)?,
                    label,
                ));
            }
        }
        Recipe::Fig4b => {
            let powers = [1.4, 3.0, 5.0, 6.7];
            let p = reference.p_ref;
            let none = ModulationWaveform::None;
            rows.extend(labelled(
                sweep_power(&reference, &train(p, 0), &chain, &none, &powers, &settings)?,
                "unmodulated",
            ));
            let gated = SweepSettings { dark: DarkPolicy::TuneToFloor { floor: 0.01 }, ..settings };
            let step = ModulationWaveform::heaviside(45.0);
            rows.extend(labelled(sweep_power(&reference, &train(p, 1), &chain, &step, &powers, &gated)?, "gated"));
        }
    }
    Ok(rows)
}
