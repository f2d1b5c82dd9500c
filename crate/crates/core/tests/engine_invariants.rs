use qdpurify::analysis::{analyze, AnalysisSettings};
use qdpurify::correlator::{g2_zero, hbt_correlate};
use qdpurify::sweeper::predict_g2;
use qdpurify::*;

fn quiet() -> DetectionChain {
    DetectionChain { dark_rate: 0.0, ..DetectionChain::default() }
}

fn perfect_source() -> EmitterModel {
    EmitterModel { tau_bx: 1.0, tau_x: 5.0, beta_ref: 0.0, ..EmitterModel::reference() }
}

#[test]
fn tags_are_sorted_and_in_range() {
    let m = EmitterModel::reference();
    let train = PulseTrainConfig::new(100_000, m.p_ref, 3);
    let sim = simulate(&m, &train, &ModulationWaveform::None, &DetectionChain::default()).unwrap();
    assert!(sim.tags.windows(2).all(|w| w[0] <= w[1]));
    assert!(sim.tags.iter().all(|t| t.channel < 2));
    assert_eq!(sim.summary.tags_written as usize, sim.tags.len());
    let by_channel: u64 = sim.summary.tags_per_channel.iter().sum();
    assert_eq!(by_channel, sim.summary.tags_written);
}

#[test]
fn per_channel_dead_time_is_respected() {
    let m = EmitterModel::reference();
    let chain = DetectionChain { efficiency: 1.0, dead_time: 80.0, ..DetectionChain::default() };
    let train = PulseTrainConfig::new(50_000, m.p_ref, 4);
    let sim = simulate(&m, &train, &ModulationWaveform::None, &chain).unwrap();
    for ch in 0..2 {
        let ts: Vec<u64> = sim.tags.iter().filter(|t| t.channel == ch).map(|t| t.timestamp).collect();
        assert!(ts.windows(2).all(|w| w[1] - w[0] >= 80_000));
    }
    assert!(sim.summary.dead_time_losses > 0);
}

#[test]
fn perfect_source_has_empty_center_peak() {
    let m = perfect_source();
    let train = PulseTrainConfig::new(2_000_000, 5.0, 5);
    let sim = simulate(&m, &train, &ModulationWaveform::None, &quiet()).unwrap();
    let h = hbt_correlate(&sim.tags, 10_500.0, 2.0).unwrap();
    let g = g2_zero(&h, 1000.0, 10, 200.0).unwrap();
    assert_eq!(g.center_area, 0);
    assert!(g.mean_side() > 1000.0);
}

#[test]
fn leakage_only_is_poissonian() {
    let dark = EmitterModel { brightness_max: 0.0, ..EmitterModel::reference() };
    let chain = DetectionChain { dark_rate: 0.0, leakage_per_pulse: 2.0, ..DetectionChain::default() };
    let train = PulseTrainConfig::new(1_000_000, 5.8, 6);
    let sim = simulate(&dark, &train, &ModulationWaveform::None, &chain).unwrap();
    let h = hbt_correlate(&sim.tags, 10_500.0, 2.0).unwrap();
    let g = g2_zero(&h, 1000.0, 10, 200.0).unwrap();
    assert!((g.g2_zero - 1.0).abs() < 4.0 * g.sigma, "{} ± {}", g.g2_zero, g.sigma);
    assert_eq!(sim.summary.tags_by_kind[0] + sim.summary.tags_by_kind[1], 0);
}

/// Monte Carlo g2 agrees with the analytic peak-area model, including
/// neighbouring-pulse spill into wide windows.
#[test]
fn g2_matches_peak_area_model() {
    let m = EmitterModel::reference();
    let cases = [
        (ModulationWaveform::None, quiet(), 200.0),
        (ModulationWaveform::None, quiet(), 1000.0),
        (ModulationWaveform::heaviside(30.0), DetectionChain { dark_rate: 300.0, ..quiet() }, 200.0),
        (ModulationWaveform::None, DetectionChain { leakage_per_pulse: 0.05, ..quiet() }, 200.0),
    ];
    for (i, (w, chain, window)) in cases.into_iter().enumerate() {
        let train = PulseTrainConfig::new(4_000_000, m.p_ref, 20 + i as u64);
        let sim = simulate(&m, &train, &w, &chain).unwrap();
        let settings = AnalysisSettings { integration_window: window, ..AnalysisSettings::default() };
        let an = analyze(&sim.tags, 1000.0, &w, 0.0, &settings).unwrap();
        let g = an.g2.unwrap();
        let pred = predict_g2(&m, m.p_ref, &w, &chain, 1000.0, window).unwrap();
        assert!((g.g2_zero - pred).abs() < 3.0 * g.sigma, "case {i}: mc {} ± {} vs {pred}", g.g2_zero, g.sigma);
    }
}

#[test]
fn wide_window_collects_spill() {
    let m = EmitterModel::reference();
    let q = quiet();
    let narrow = predict_g2(&m, m.p_ref, &ModulationWaveform::None, &q, 1000.0, 200.0).unwrap();
    let wide = predict_g2(&m, m.p_ref, &ModulationWaveform::None, &q, 1000.0, 1000.0).unwrap();
    assert!(wide > narrow + 0.01, "{narrow} {wide}");
}

#[test]
fn cascade_timing_orders_photons() {
    let m = EmitterModel { timing: EmissionTiming::Cascade, ..EmitterModel::reference() };
    let train = PulseTrainConfig::new(200_000, m.p_ref, 8);
    let sim = simulate(&m, &train, &ModulationWaveform::None, &DetectionChain::ideal()).unwrap();
    // Ideal chain, no dead time: pair count unchanged, so the share matches the model.
    let (b, s) = sim.summary.gated_biexciton_share();
    assert!((b - m.beta_at_power(m.p_ref).unwrap()).abs() < 4.0 * s);
}

#[test]
fn blinking_scales_counts_by_duty() {
    let b = BlinkingModel { rate_on_to_off: 50.0, rate_off_to_on: 50.0, off_brightness: 0.0 };
    let m = EmitterModel { blinking: Some(b), ..EmitterModel::reference() };
    let train = PulseTrainConfig::new(1_000_000, m.p_ref, 9);
    let sim = simulate(&m, &train, &ModulationWaveform::None, &DetectionChain::ideal()).unwrap();
    let per_pulse = sim.summary.emitted() as f64 / 1e6;
    let expected = m.expected_photons_per_pulse(m.p_ref).unwrap();
    // One-second run at 50/s switching: about 50 dwell periods, so a loose bound.
    assert!((per_pulse - expected).abs() < 0.2 * expected, "{per_pulse} vs {expected}");
}
