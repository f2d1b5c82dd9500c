use qdpurify::correlator::{waveform_histogram_from, WaveformHistogram};
use qdpurify::estimators::{biexciton_fraction, biexciton_fraction_with, decompose, DecompositionOptions};
use qdpurify::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Expected counts of an ideal biexponential trace with `n` photons in 1 ns bins.
fn expected_trace(n: f64, beta: f64, tau1: f64, tau2: f64, bins: usize) -> Vec<f64> {
    let cdf = |t: f64| beta * (1.0 - (-t / tau1).exp()) + (1.0 - beta) * (1.0 - (-t / tau2).exp());
    (0..bins).map(|k| n * (cdf(k as f64 + 1.0) - cdf(k as f64))).collect()
}

fn poisson_sample(mu: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mu.iter().map(|&m| if m > 0.0 { Poisson::new(m).unwrap().sample(&mut rng) } else { 0.0 }).collect()
}

#[test]
fn noiseless_trace_recovers_parameters() {
    let mu = expected_trace(1e7, 0.04, 2.0, 138.0, 1000);
    let t: Vec<f64> = (0..1000).map(|k| k as f64 + 0.5).collect();
    let d = decompose(&t, &mu, &DecompositionOptions::default()).unwrap();
    assert!((d.tau_slow - 138.0).abs() < 0.01);
    assert!((d.beta_hat - 0.04).abs() < 1e-3, "{}", d.beta_hat);
    let tf = d.tau_fast.unwrap();
    assert!((tf - 2.0).abs() < 0.2, "{tf}");
}

#[test]
fn poisson_traces_are_unbiased_across_seeds() {
    let mu = expected_trace(2e5, 0.04, 2.0, 138.0, 1000);
    let t: Vec<f64> = (0..1000).map(|k| k as f64 + 0.5).collect();
    let reps = 60;
    let (mut sum, mut sig) = (0.0, 0.0);
    for s in 0..reps {
        let c = poisson_sample(&mu, s);
        let d = decompose(&t, &c, &DecompositionOptions::default()).unwrap();
        sum += d.beta_hat;
        sig += d.beta_sigma;
    }
    let (mean, sig) = (sum / reps as f64, sig / reps as f64);
    assert!((mean - 0.04).abs() < 3.0 * sig / (reps as f64).sqrt(), "mean {mean}, sigma {sig}");
}

#[test]
fn flat_background_is_removed_when_known() {
    let bg = 30.0;
    let mu: Vec<f64> = expected_trace(1e6, 0.04, 2.0, 138.0, 1000).into_iter().map(|m| m + bg).collect();
    let t: Vec<f64> = (0..1000).map(|k| k as f64 + 0.5).collect();
    let c = poisson_sample(&mu, 11);
    let with = decompose(&t, &c, &DecompositionOptions { background_per_bin: bg, ..Default::default() }).unwrap();
    let without = decompose(&t, &c, &DecompositionOptions::default()).unwrap();
    assert!((with.beta_hat - 0.04).abs() < 3.0 * with.beta_sigma, "{} ± {}", with.beta_hat, with.beta_sigma);
    assert!((with.tau_slow - 138.0).abs() < (without.tau_slow - 138.0).abs());
}

#[test]
fn simulated_waveform_round_trip() {
    let m = EmitterModel::reference();
    let train = PulseTrainConfig::new(3_000_000, m.p_ref, 12);
    let chain = DetectionChain { dark_rate: 0.0, dead_time: 0.0, ..DetectionChain::default() };
    let sim = simulate(&m, &train, &ModulationWaveform::None, &chain).unwrap();
    let h: WaveformHistogram = waveform_histogram_from(&sim.tags, 1000.0, 1.0, -10.0).unwrap();
    let d = biexciton_fraction(&h, 100.0).unwrap();
    let (truth, _) = sim.summary.gated_biexciton_share();
    assert!((d.beta_hat - truth).abs() < 3.0 * d.beta_sigma, "{} ± {} vs {truth}", d.beta_hat, d.beta_sigma);
}

#[test]
fn gated_trace_uses_gate_shape() {
    let m = EmitterModel::reference();
    let w = ModulationWaveform::smoothed(5.0, 50.0);
    let train = PulseTrainConfig::new(3_000_000, m.p_ref, 13);
    let chain = DetectionChain { dark_rate: 0.0, dead_time: 0.0, ..DetectionChain::default() };
    let sim = simulate(&m, &train, &w, &chain).unwrap();
    let h = waveform_histogram_from(&sim.tags, 1000.0, 1.0, -10.0).unwrap();
    let d = biexciton_fraction_with(&h, &DecompositionOptions::gated(100.0, w)).unwrap();
    let analytic = gated_beta(&m, m.p_ref, &w).unwrap();
    assert!((d.beta_hat - analytic).abs() < 3.0 * d.beta_sigma, "{} ± {} vs {analytic}", d.beta_hat, d.beta_sigma);
    assert!((d.tau_slow - 138.0).abs() < 3.0);
}
