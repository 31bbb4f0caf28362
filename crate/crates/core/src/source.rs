//! Photon-emission statistics of the two light sources.
//!
//! A laser is a Poisson emitter with `g2 = 1`. The single-photon source is a
//! pumped two-level system: the pump rate `k` drives the ground state to the
//! excited state, which decays with rate `gamma` by emitting one photon. An
//! emission leaves the emitter in the ground state, so successive emissions
//! form a renewal process.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::real::{one_minus_exp_over, Real};

/// Photon emitter model. All rates in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LightSource<T> {
    /// Attenuated coherent light with mean photon rate `lambda`.
    Laser { lambda: T },
    /// Two-level emitter with pump rate `k` and decay rate `gamma = 1/T1`.
    SinglePhoton { k: T, gamma: T },
}

/// Populations of the two-level emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState<T> {
    pub rho11: T,
    pub rho22: T,
}

fn check_rate<T: Real>(name: &str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Steady-state emission rate `kΓ/(k+Γ)` of a pumped two-level emitter.
/// Default emitter recovery rate `Γ = 1/T1` with `T1 = 10 ns`.
pub const DEFAULT_GAMMA: f64 = 1e8;

pub fn emission_rate<T: Real>(k: T, gamma: T) -> Result<T> {
    check_rate("pump rate k", k)?;
    check_rate("decay rate gamma", gamma)?;
    Ok(k * gamma / (k + gamma))
}

/// Pump rate needed to reach emission rate `lambda`; inverse of [`emission_rate`].
pub fn pump_rate_for<T: Real>(lambda: T, gamma: T) -> Result<T> {
    check_rate("photon rate lambda", lambda)?;
    check_rate("decay rate gamma", gamma)?;
    if lambda >= gamma {
        return Err(domain(format!(
            "photon rate {lambda} is unreachable for a single emitter with decay rate {gamma}"
        )));
    }
    Ok(lambda * gamma / (gamma - lambda))
}

/// Excited-state population a delay `tau` after an emission.
pub fn excited_population<T: Real>(k: T, gamma: T, tau: T) -> Result<T> {
    Ok(two_level_state(k, gamma, tau)?.rho22)
}

/// Both populations a delay `tau` after an emission (emitter starts in the ground state).
pub fn two_level_state<T: Real>(k: T, gamma: T, tau: T) -> Result<TwoLevelState<T>> {
    check_rate("pump rate k", k)?;
    check_rate("decay rate gamma", gamma)?;
    if !(tau >= T::zero()) {
        return Err(domain(format!("delay must be non-negative, got {tau}")));
    }
    let s = k + gamma;
    let decay = (-s * tau).exp();
    Ok(TwoLevelState {
        rho11: (k * decay + gamma) / s,
        rho22: -k * (-s * tau).exp_m1() / s,
    })
}

impl<T: Real> LightSource<T> {
    pub fn laser(lambda: T) -> Result<Self> {
        check_rate("photon rate lambda", lambda)?;
        Ok(Self::Laser { lambda })
    }

    pub fn single_photon(k: T, gamma: T) -> Result<Self> {
        check_rate("pump rate k", k)?;
        check_rate("decay rate gamma", gamma)?;
        Ok(Self::SinglePhoton { k, gamma })
    }

    /// Single-photon source pumped so that it emits `lambda` photons per second.
    pub fn single_photon_at_rate(lambda: T, gamma: T) -> Result<Self> {
        let k = pump_rate_for(lambda, gamma)?;
        Ok(Self::SinglePhoton { k, gamma })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Laser { lambda } => check_rate("photon rate lambda", lambda),
            Self::SinglePhoton { k, gamma } => {
                check_rate("pump rate k", k)?;
                check_rate("decay rate gamma", gamma)
            }
        }
    }

    pub fn is_laser(&self) -> bool {
        matches!(self, Self::Laser { .. })
    }

    /// Mean emitted photon rate λ.
    pub fn emission_rate(&self) -> T {
        match *self {
            Self::Laser { lambda } => lambda,
            Self::SinglePhoton { k, gamma } => k * gamma / (k + gamma),
        }
    }

    /// Pump rate of a single-photon source, `None` for a laser.
    pub fn pump_rate(&self) -> Option<T> {
        match *self {
            Self::Laser { .. } => None,
            Self::SinglePhoton { k, .. } => Some(k),
        }
    }

    /// Recovery rate `k + Γ` of the antibunching dip, `None` for a laser.
    pub fn recovery_rate(&self) -> Option<T> {
        match *self {
            Self::Laser { .. } => None,
            Self::SinglePhoton { k, gamma } => Some(k + gamma),
        }
    }

    /// Same source type at a different emission rate (pump rate recomputed
    /// for the single emitter).
    pub fn with_emission_rate(&self, lambda: T) -> Result<Self> {
        match *self {
            Self::Laser { .. } => Self::laser(lambda),
            Self::SinglePhoton { gamma, .. } => Self::single_photon_at_rate(lambda, gamma),
        }
    }

    /// Normalized second-order correlation; even in `tau`.
    pub fn g2(&self, tau: T) -> T {
        match self.recovery_rate() {
            None => T::one(),
            Some(s) => -(-s * tau.abs()).exp_m1(),
        }
    }

    /// `∫_0^t g2` for `t >= 0`.
    fn g2_primitive(&self, t: T) -> T {
        match self.recovery_rate() {
            None => t,
            Some(s) => {
                let x = s * t;
                if x < T::lit(1e-3) {
                    // t·(x/2 - x²/6 + x³/24 - x⁴/120)
                    t * x
                        * (T::lit(0.5)
                            - x * (T::lit(1.0 / 6.0)
                                - x * (T::lit(1.0 / 24.0) - x / T::lit(120.0))))
                } else {
                    t * (T::one() - one_minus_exp_over(x))
                }
            }
        }
    }

    /// `∫_{t1}^{t2} g2(τ) dτ` in closed form; either bound may be negative.
    pub fn g2_integral(&self, t1: T, t2: T) -> T {
        let odd = |t: T| {
            if t < T::zero() {
                -self.g2_primitive(-t)
            } else {
                self.g2_primitive(t)
            }
        };
        odd(t2) - odd(t1)
    }

    /// Number density `J(τ) = g2(τ)·η·λ` of any subsequent photon.
    pub fn number_density_j(&self, eta: T, tau: T) -> Result<T> {
        check_efficiency(eta)?;
        if !(tau >= T::zero()) {
            return Err(domain(format!("delay must be non-negative, got {tau}")));
        }
        Ok(self.g2(tau) * eta * self.emission_rate())
    }
}

pub(crate) fn check_efficiency<T: Real>(eta: T) -> Result<()> {
    if eta > T::zero() && eta <= T::one() {
        Ok(())
    } else {
        Err(domain(format!("efficiency must lie in (0, 1], got {eta}")))
    }
}
