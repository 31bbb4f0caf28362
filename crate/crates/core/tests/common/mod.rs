#![allow(dead_code)]

use num_complex::Complex64;
use qrng_lab::waiting_time::next_photon_density;
use qrng_lab::LightSource;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-Talbot numerical inversion of a Laplace transform at `t > 0`.
pub fn talbot_inverse(f: impl Fn(Complex64) -> Complex64, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut acc = 0.5 * (f(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        acc += ((s * t).exp() * f(s) * Complex64::new(1.0, sigma)).re;
    }
    r / m as f64 * acc
}

/// Laplace transform of the next-photon density of a two-level emitter,
/// obtained from `J̃ = ηλ s / (p (p + s))` through `K̃ = J̃ / (1 + J̃)`.
pub fn k_sps_laplace(eta_lambda: f64, s_rate: f64, p: Complex64) -> Complex64 {
    let j = eta_lambda * s_rate / (p * (p + s_rate));
    j / (1.0 + j)
}

/// `∫₀^∞ K(τ) dτ` by double-exponential quadrature after mapping `τ = c·x/(1 − x)`.
pub fn integrate_k(source: &LightSource<f64>, eta: f64) -> f64 {
    let c = 1.0 / (eta * source.emission_rate());
    let g = |x: f64| {
        if x >= 1.0 {
            return 0.0;
        }
        let tau = c * x / (1.0 - x);
        next_photon_density(source, eta, tau).unwrap() * c / ((1.0 - x) * (1.0 - x))
    };
    quadrature::integrate(g, 0.0, 1.0, 1e-12).integral
}

/// Random valid source and overall efficiency; roughly half lasers.
pub fn random_source(rng: &mut ChaCha8Rng) -> (LightSource<f64>, f64) {
    let eta = rng.random_range(0.05..1.0);
    if rng.random_bool(0.5) {
        (
            LightSource::laser(10f64.powf(rng.random_range(5.0..10.0))).unwrap(),
            eta,
        )
    } else {
        let gamma = 10f64.powf(rng.random_range(7.0..9.5));
        let k = gamma * 10f64.powf(rng.random_range(-3.0..3.0));
        (LightSource::single_photon(k, gamma).unwrap(), eta)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest relative error of closed-form `K` against the Talbot oracle over
/// 50 points spread across five single-photon parameter sets.
pub fn talbot_max_rel_error() -> f64 {
    let cases = [
        (3e7, 1e8, 0.6),
        (1e8, 1e8, 0.3),
        (5e8, 2e8, 0.9),
        (2e6, 5e7, 0.5),
        (1e9, 1e9, 0.25),
    ];
    let mut worst: f64 = 0.0;
    for (k, gamma, eta) in cases {
        let src = LightSource::single_photon(k, gamma).unwrap();
        let (lam, s_rate) = (src.emission_rate(), k + gamma);
        let scale = 1.0 / (eta * lam) + 1.0 / s_rate;
        for i in 0..10 {
            let t = scale * (0.05 + 0.4 * i as f64);
            let closed = next_photon_density(&src, eta, t).unwrap();
            let oracle = talbot_inverse(|p| k_sps_laplace(eta * lam, s_rate, p), t, 24);
            worst = worst.max((closed - oracle).abs() / oracle.abs());
        }
    }
    worst
}
