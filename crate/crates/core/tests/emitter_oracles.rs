use approx::assert_relative_eq;
use qdpurify::{intensity, EmitterModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Poisson pmf summed term by term.
fn poisson_tail(mean: f64, at_least: u32) -> f64 {
    let mut term = (-mean).exp();
    let mut below = 0.0;
    for k in 0..at_least {
        below += term;
        term *= mean / (k + 1) as f64;
    }
    1.0 - below
}

/// Biexciton share from first principles: a pulse with >= 2 excitations gives a
/// biexciton photon with fixed yield, every pulse with >= 1 gives an exciton.
fn oracle_beta(beta_ref: f64, p_ref: f64, power: f64) -> f64 {
    let ratio = |p: f64| poisson_tail(p, 2) / poisson_tail(p, 1);
    let eta = beta_ref / ((1.0 - beta_ref) * ratio(p_ref));
    let bx = eta * ratio(power);
    bx / (1.0 + bx)
}

#[test]
fn beta_scaling_matches_poisson_oracle() {
    let m = EmitterModel::reference();
    for power in [0.5, 1.4, 3.0, 5.8, 6.7, 2.0 * 5.8, 30.0] {
        assert_relative_eq!(m.beta_at_power(power).unwrap(), oracle_beta(0.04, 5.8, power), max_relative = 1e-9);
    }
    assert_relative_eq!(m.beta_at_power(11.6).unwrap(), 0.040684, max_relative = 1e-4);
}

#[test]
fn beta_at_double_power_matches_excitation_sampling() {
    let m = EmitterModel::reference();
    let eta = m.biexciton_yield();
    let poisson = Poisson::new(2.0 * m.p_ref).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut x, mut bx) = (0u64, 0u64);
    for _ in 0..4_000_000 {
        let n = poisson.sample(&mut rng) as u64;
        if n >= 1 {
            x += 1;
        }
        if n >= 2 && rng.gen::<f64>() < eta {
            bx += 1;
        }
    }
    let share = bx as f64 / (x + bx) as f64;
    let sigma = (share * (1.0 - share) / (x + bx) as f64).sqrt();
    let model = m.beta_at_power(2.0 * m.p_ref).unwrap();
    assert!((share - model).abs() < 4.0 * sigma, "{share} ± {sigma} vs {model}");
}

#[test]
fn beta_rises_with_power_and_saturates() {
    let m = EmitterModel::reference();
    let powers: Vec<f64> = (1..200).map(|k| k as f64 * 0.1).collect();
    let betas: Vec<f64> = powers.iter().map(|&p| m.beta_at_power(p).unwrap()).collect();
    assert!(betas.windows(2).all(|w| w[1] > w[0]));
    assert!(betas[0] < 0.004, "low-power share {}", betas[0]);
    assert!(*betas.last().unwrap() < 0.045);
}

#[test]
fn intensity_integrates_to_one_by_trapezoid() {
    let m = EmitterModel::reference();
    let dt = 0.005;
    let n = (138.0 * 40.0 / dt) as usize;
    let f = |k: usize| intensity(&m, m.p_ref, k as f64 * dt).unwrap();
    let sum: f64 = (1..n).map(f).sum::<f64>() + 0.5 * (f(0) + f(n));
    assert_relative_eq!(sum * dt, 1.0, max_relative = 1e-5);
}

#[test]
fn early_fraction_is_biexciton_dominated() {
    let m = EmitterModel::reference();
    let beta = m.beta_at_power(m.p_ref).unwrap();
    // Within the first 2 ns the biexciton carries 1 - e^-1 of its share.
    let bx = beta * (1.0 - (-1.0_f64).exp());
    let x = (1.0 - beta) * (1.0 - (-2.0_f64 / 138.0).exp());
    assert!(bx > x);
}
