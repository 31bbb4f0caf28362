//! Detector-chain arithmetic: jitter-induced permutations, dead-time-limited
//! click rates, coincidences and raw bit rates.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::real::{log_space, Real};
use crate::source::LightSource;

/// One of the two detectors behind the beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    A,
    B,
}

impl Detector {
    pub fn other(self) -> Self {
        match self {
            Self::A => Self::B,
            Self::B => Self::A,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Detection-side parameters. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorChain<T> {
    pub eta_qe: T,
    /// Probability that the splitter routes a photon to detector a.
    pub p_a: T,
    pub tau_dead: T,
    pub tau_cw: T,
    /// Combined jitter of both detectors (standard deviation).
    pub sigma_jitt: T,
}

impl<T: Real> Default for DetectorChain<T> {
    fn default() -> Self {
        Self {
            eta_qe: T::lit(0.6),
            p_a: T::lit(0.5),
            tau_dead: T::lit(50e-9),
            tau_cw: T::lit(2e-9),
            sigma_jitt: T::lit(250e-12),
        }
    }
}

impl<T: Real> DetectorChain<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_qe > T::zero() && self.eta_qe <= T::one()) {
            return Err(domain(format!(
                "eta_qe must lie in (0, 1], got {}",
                self.eta_qe
            )));
        }
        if !(self.p_a > T::zero() && self.p_a < T::one()) {
            return Err(domain(format!("p_a must lie in (0, 1), got {}", self.p_a)));
        }
        if !(self.tau_cw >= T::zero() && self.tau_dead.is_finite()) {
            return Err(domain("tau_cw must be non-negative and tau_dead finite"));
        }
        if !(self.tau_cw + self.tau_cw < self.tau_dead) {
            return Err(domain(format!(
                "need 2·tau_cw < tau_dead, got tau_cw = {} and tau_dead = {}",
                self.tau_cw, self.tau_dead
            )));
        }
        if !(self.sigma_jitt > T::zero() && self.sigma_jitt.is_finite()) {
            return Err(domain(format!(
                "sigma_jitt must be positive, got {}",
                self.sigma_jitt
            )));
        }
        Ok(())
    }

    pub fn p_b(&self) -> T {
        T::one() - self.p_a
    }

    /// Splitter probability towards `det`.
    pub fn split(&self, det: Detector) -> T {
        match det {
            Detector::A => self.p_a,
            Detector::B => self.p_b(),
        }
    }

    /// Per-detector efficiency `η_x = η_qe · p_x`.
    pub fn eta(&self, det: Detector) -> T {
        self.eta_qe * self.split(det)
    }
}

/// Probability that jitter swaps the recorded order of two clicks that are
/// just outside the coincidence window: `½ erfc(τ_cw / (√2 σ))`.
pub fn permutation_probability<T: Real>(tau_cw: T, sigma_jitt: T) -> Result<T> {
    if !(sigma_jitt > T::zero()) || !(tau_cw >= T::zero()) {
        return Err(domain("need sigma_jitt > 0 and tau_cw >= 0"));
    }
    Ok(T::lit(0.5) * (tau_cw / (T::SQRT_2() * sigma_jitt)).erfc())
}

/// Expected number of photons reaching `det` within one of its dead times,
/// `m^x = η_x λ ∫_0^{τ_dead} g2`.
pub fn blind_count<T: Real>(source: &LightSource<T>, chain: &DetectorChain<T>, det: Detector) -> T {
    chain.eta(det) * source.emission_rate() * source.g2_integral(T::zero(), chain.tau_dead)
}

/// Dead-time-limited click rate `η_x λ / (1 + m^x)`.
pub fn click_rate<T: Real>(source: &LightSource<T>, chain: &DetectorChain<T>, det: Detector) -> T {
    chain.eta(det) * source.emission_rate() / (T::one() + blind_count(source, chain, det))
}

/// Probability that `given` clicks within `±τ_cw` of a click on the opposite
/// detector, `2 λ_click ∫_0^{τ_cw} g2`. Only meaningful while well below one.
pub fn coincidence_probability<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    given: Detector,
) -> Result<T> {
    let p = T::lit(2.0)
        * click_rate(source, chain, given)
        * source.g2_integral(T::zero(), chain.tau_cw);
    if p >= T::one() {
        return Err(Error::ApproximationViolated(p.as_f64()));
    }
    Ok(p)
}

/// Probability of a click on `det` in `[t1, t2]` after a reference photon,
/// `λ_click ∫_{t1}^{t2} g2`.
pub fn click_probability_interval<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    det: Detector,
    t1: T,
    t2: T,
) -> Result<T> {
    if !(t2 >= t1) {
        return Err(domain(format!("need t1 <= t2, got [{t1}, {t2}]")));
    }
    if t2 - t1 > chain.tau_dead {
        return Err(domain("interval is longer than the dead time"));
    }
    Ok(click_rate(source, chain, det) * source.g2_integral(t1, t2))
}

/// Click, bit and coincidence rates of one operating point (s⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBundle<T> {
    pub lambda_click_a: T,
    pub lambda_click_b: T,
    pub lambda_bit_a: T,
    pub lambda_bit_b: T,
    pub lambda_coinc: T,
    /// `λ_bit^a + λ_bit^b`, coincidences excluded.
    pub lambda_bit_total: T,
    /// `P_coinc^a`, probability that a joins a click on b.
    pub p_coinc_a: T,
    /// `P_coinc^b`, probability that b joins a click on a.
    pub p_coinc_b: T,
}

impl<T: Real> RateBundle<T> {
    pub fn click(&self, det: Detector) -> T {
        match det {
            Detector::A => self.lambda_click_a,
            Detector::B => self.lambda_click_b,
        }
    }

    pub fn bit(&self, det: Detector) -> T {
        match det {
            Detector::A => self.lambda_bit_a,
            Detector::B => self.lambda_bit_b,
        }
    }

    pub fn p_coinc(&self, det: Detector) -> T {
        match det {
            Detector::A => self.p_coinc_a,
            Detector::B => self.p_coinc_b,
        }
    }
}

pub fn rate_bundle<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
) -> Result<RateBundle<T>> {
    source.validate()?;
    chain.validate()?;
    let click_a = click_rate(source, chain, Detector::A);
    let click_b = click_rate(source, chain, Detector::B);
    let p_coinc_a = coincidence_probability(source, chain, Detector::A)?;
    let p_coinc_b = coincidence_probability(source, chain, Detector::B)?;
    let bit_a = click_a * (T::one() - p_coinc_b);
    let bit_b = click_b * (T::one() - p_coinc_a);
    Ok(RateBundle {
        lambda_click_a: click_a,
        lambda_click_b: click_b,
        lambda_bit_a: bit_a,
        lambda_bit_b: bit_b,
        lambda_coinc: click_a * p_coinc_b,
        lambda_bit_total: bit_a + bit_b,
        p_coinc_a,
        p_coinc_b,
    })
}

/// Relative raw bit-rate gain `λ_bit,sps / λ_bit,laser − 1` on detector a at equal emission rate.
pub fn bit_rate_enhancement<T: Real>(chain: &DetectorChain<T>, gamma: T, lambda: T) -> Result<T> {
    let sps = rate_bundle(&LightSource::single_photon_at_rate(lambda, gamma)?, chain)?;
    let laser = rate_bundle(&LightSource::laser(lambda)?, chain)?;
    Ok(sps.lambda_bit_a / laser.lambda_bit_a - T::one())
}

/// Largest [`bit_rate_enhancement`] over `points` log-spaced rates in `[1e5, 0.99999 Γ]`,
/// returned as `(λ, enhancement)`.
pub fn max_bit_rate_enhancement<T: Real>(
    chain: &DetectorChain<T>,
    gamma: T,
    points: usize,
) -> Result<(T, T)> {
    let mut best = (T::zero(), T::neg_infinity());
    for l in log_space(T::lit(1e5), T::lit(0.99999) * gamma, points) {
        let e = bit_rate_enhancement(chain, gamma, l)?;
        if e > best.1 {
            best = (l, e);
        }
    }
    Ok(best)
}
