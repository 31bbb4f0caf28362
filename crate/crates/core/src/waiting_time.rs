//! Waiting-time densities of the photon stream seen through an attenuation `eta`.
//!
//! `K` is the density of the *next* photon after a reference photon at `τ = 0`,
//! `L_m` the density of the `m`-th one (`L_1 = K`, `L_{m+1} = L_m ∗ K`), and
//! `P_m(τ)` the probability of exactly `m` further photons in `[0, τ]`.
//!
//! Closed forms are available for `K` and `P_0` for both sources. The higher
//! densities are built numerically on a uniform grid.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::real::{one_minus_exp_over, Real};
use crate::source::{check_efficiency, LightSource};

/// Roots of `p² + s p + η λ s` for the attenuated single emitter, written so
/// that neither loses precision when `ηλ ≪ s`: `slow = -2ηλs/(s+D)` and
/// `D = √(s(s-4ηλ))`.
fn emitter_roots<T: Real>(s: T, rate: T) -> (T, T) {
    let disc = (s * (s - T::lit(4.0) * rate)).max(T::zero());
    let d = disc.sqrt();
    let slow = -T::lit(2.0) * rate * s / (s + d);
    (slow, d)
}

/// Closed-form next-photon density `K(τ)` of the source attenuated by `eta`.
///
/// For the single emitter this is the inverse Laplace transform of
/// `ηλs / (p² + s p + ηλ s)` with `s = k + Γ`, which covers the critically
/// damped point `s = 4ηλ` without a special case.
pub fn next_photon_density<T: Real>(source: &LightSource<T>, eta: T, tau: T) -> Result<T> {
    check_efficiency(eta)?;
    if !(tau >= T::zero()) {
        return Err(domain(format!("delay must be non-negative, got {tau}")));
    }
    let rate = eta * source.emission_rate();
    Ok(match source.recovery_rate() {
        None => rate * (-rate * tau).exp(),
        Some(s) => {
            let (slow, d) = emitter_roots(s, rate);
            rate * s * tau * (slow * tau).exp() * one_minus_exp_over(d * tau)
        }
    })
}

/// Natural log of the closed-form `P_0(τ)`, the probability that no further
/// photon arrives within `τ` of a reference photon.
pub fn ln_survival<T: Real>(source: &LightSource<T>, eta: T, tau: T) -> T {
    let rate = eta * source.emission_rate();
    match source.recovery_rate() {
        None => -rate * tau,
        Some(s) => {
            let (slow, d) = emitter_roots(s, rate);
            slow * tau + (-slow * tau * one_minus_exp_over(d * tau)).ln_1p()
        }
    }
}

/// Closed-form `P_0(τ)`.
pub fn survival<T: Real>(source: &LightSource<T>, eta: T, tau: T) -> Result<T> {
    check_efficiency(eta)?;
    if !(tau >= T::zero()) {
        return Err(domain(format!("delay must be non-negative, got {tau}")));
    }
    Ok(ln_survival(source, eta, tau).exp())
}

/// Closed-form probability of no photon in `[t1, t2]` after a reference photon
/// at 0, `P_0(t2)/P_0(t1)`, evaluated in log space so deep tails stay finite.
pub fn no_photon_between<T: Real>(source: &LightSource<T>, eta: T, t1: T, t2: T) -> T {
    (ln_survival(source, eta, t2) - ln_survival(source, eta, t1)).exp()
}

/// Grid sizing request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub dt: T,
    pub t_max: T,
    /// Cap on the number of samples; beyond it the step is widened instead.
    pub max_points: usize,
}

impl<T: Real> Default for GridSpec<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.05e-9),
            t_max: T::lit(2e-6),
            max_points: (1 << 18) + 1,
        }
    }
}

pub const DEFAULT_M_MAX: usize = 12;

const K_NORM_TOL: f64 = 1e-6;
const L_NORM_TOL: f64 = 1e-4;
const MAX_DOUBLINGS: usize = 48;

/// Which sampled function a CSV export refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFunction {
    K,
    L(usize),
    P(usize),
}

/// Uniform time grid carrying `K`, `L_1..L_{m_max}`, `P_0..P_{m_max}`.
#[derive(Debug, Clone)]
pub struct WaitingTimeGrid<T> {
    source: LightSource<T>,
    eta: T,
    dt: T,
    k: Vec<T>,
    l: Vec<Vec<T>>,
    p: Vec<Vec<T>>,
    l_integrals: Vec<T>,
}

/// Trapezoidal convolution on a uniform grid computed with FFTs.
struct Convolver<T: Real> {
    len: usize,
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Convolver<T> {
    fn new(n: usize) -> Self {
        let len = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            len,
            n,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    fn spectrum(&self, a: &[T]) -> Vec<Complex<T>> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len];
        for (dst, &src) in buf.iter_mut().zip(a) {
            dst.re = src;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// `(a ∗ b)(τ_n)` by the trapezoid rule, given both inputs and their spectra.
    fn convolve(&self, a: &[T], fa: &[Complex<T>], b: &[T], fb: &[Complex<T>], dt: T) -> Vec<T> {
        let mut buf: Vec<Complex<T>> = fa.iter().zip(fb).map(|(x, y)| x * y).collect();
        self.inverse.process(&mut buf);
        let scale = dt / T::from_usize(self.len).unwrap();
        let half = T::lit(0.5) * dt;
        let mut out: Vec<T> = (0..self.n)
            .map(|i| buf[i].re * scale - half * (a[i] * b[0] + a[0] * b[i]))
            .collect();
        out[0] = T::zero();
        out
    }
}

/// Direct `O(n²)` trapezoidal convolution; reference for the FFT path.
pub fn convolve_direct<T: Real>(a: &[T], b: &[T], dt: T) -> Vec<T> {
    let n = a.len().min(b.len());
    (0..n)
        .map(|i| {
            if i == 0 {
                return T::zero();
            }
            let mut acc = T::lit(0.5) * (a[i] * b[0] + a[0] * b[i]);
            for j in 1..i {
                acc += a[i - j] * b[j];
            }
            acc * dt
        })
        .collect()
}

/// FFT-accelerated trapezoidal convolution with the same endpoint weights as
/// [`convolve_direct`].
pub fn convolve_fft<T: Real>(a: &[T], b: &[T], dt: T) -> Vec<T> {
    let n = a.len().min(b.len());
    let c = Convolver::new(n);
    let (fa, fb) = (c.spectrum(&a[..n]), c.spectrum(&b[..n]));
    c.convolve(&a[..n], &fa, &b[..n], &fb, dt)
}

fn trapezoid<T: Real>(y: &[T], dt: T) -> T {
    match y.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = y[1..n - 1].iter().copied().sum();
            dt * (inner + T::lit(0.5) * (y[0] + y[n - 1]))
        }
    }
}

impl<T: Real> WaitingTimeGrid<T> {
    /// Builds `K`, `L_1..L_{m_max}` and `P_0..P_{m_max}` for the source seen
    /// through attenuation `eta`.
    ///
    /// The horizon starts at `spec.t_max` and is doubled until `∫K ≥ 1 - 1e-6`
    /// and every `L_m` integrates to one within `1e-4`. Past
    /// `spec.max_points` samples the step widens with the horizon.
    pub fn build(source: &LightSource<T>, eta: T, m_max: usize, spec: GridSpec<T>) -> Result<Self> {
        source.validate()?;
        check_efficiency(eta)?;
        if m_max < 1 {
            return Err(domain("m_max must be at least 1"));
        }
        if !(spec.dt > T::zero() && spec.t_max > spec.dt) || spec.max_points < 2 {
            return Err(domain(
                "grid needs dt > 0, t_max > dt and at least two points",
            ));
        }

        let mut t_max = spec.t_max;
        let mut last_failure = None;
        for _ in 0..MAX_DOUBLINGS {
            let ideal = (t_max / spec.dt).round().to_usize().unwrap_or(usize::MAX);
            let (n, dt) = if ideal + 1 > spec.max_points {
                let n = spec.max_points;
                (n, t_max / T::from_usize(n - 1).unwrap())
            } else {
                (ideal + 1, t_max / T::from_usize(ideal).unwrap())
            };

            // The horizon must hold all but 1e-6 of the next-photon mass.
            if ln_survival(source, eta, t_max) > T::lit(K_NORM_TOL).ln() {
                t_max = t_max + t_max;
                continue;
            }

            let k: Vec<T> = (0..n)
                .map(|i| next_photon_density(source, eta, dt * T::from_usize(i).unwrap()))
                .collect::<Result<_>>()?;
            let k_integral = trapezoid(&k, dt);
            let k_exact = -ln_survival(source, eta, t_max).exp_m1();
            if (k_integral - k_exact).abs() > T::lit(L_NORM_TOL) {
                return Err(Error::Resolution {
                    m: 1,
                    integral: k_integral.as_f64(),
                });
            }

            let conv = Convolver::new(n);
            let fk = conv.spectrum(&k);
            let mut l = vec![k.clone()];
            let mut spectra = vec![fk.clone()];
            for _ in 1..m_max {
                let prev = l.last().unwrap();
                let fprev = spectra.last().unwrap();
                let next = conv.convolve(prev, fprev, &k, &fk, dt);
                spectra.push(conv.spectrum(&next));
                l.push(next);
            }
            let l_integrals: Vec<T> = l.iter().map(|v| trapezoid(v, dt)).collect();

            // P_0 = 1 - cumulative trapezoid of K
            let mut p0 = Vec::with_capacity(n);
            let mut acc = T::zero();
            p0.push(T::one());
            for i in 1..n {
                acc += T::lit(0.5) * dt * (k[i - 1] + k[i]);
                p0.push(T::one() - acc);
            }
            let fp0 = conv.spectrum(&p0);
            let mut p = vec![p0.clone()];
            for (lm, flm) in l.iter().zip(&spectra) {
                p.push(conv.convolve(lm, flm, &p0, &fp0, dt));
            }

            if let Some((idx, &integral)) = l_integrals
                .iter()
                .enumerate()
                .find(|(_, v)| (**v - T::one()).abs() > T::lit(L_NORM_TOL))
            {
                let failure = Error::Resolution {
                    m: idx + 1,
                    integral: integral.as_f64(),
                };
                // Mass of L_m past the horizon is the chance of fewer than m photons by then.
                let tail: T = p[..=idx].iter().map(|v| v[n - 1]).sum();
                if integral < T::one() && tail > T::lit(0.5 * L_NORM_TOL) {
                    last_failure = Some(failure);
                    t_max = t_max + t_max;
                    continue;
                }
                return Err(failure);
            }

            return Ok(Self {
                source: *source,
                eta,
                dt,
                k,
                l,
                p,
                l_integrals,
            });
        }
        Err(last_failure.unwrap_or(Error::Numeric(
            "next-photon density never normalized".into(),
        )))
    }

    /// Grid with the default sizing and `m_max = 12`.
    pub fn with_defaults(source: &LightSource<T>, eta: T) -> Result<Self> {
        Self::build(source, eta, DEFAULT_M_MAX, GridSpec::default())
    }

    pub fn source(&self) -> &LightSource<T> {
        &self.source
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_points(&self) -> usize {
        self.k.len()
    }

    pub fn t_max(&self) -> T {
        self.dt * T::from_usize(self.n_points() - 1).unwrap()
    }

    pub fn m_max(&self) -> usize {
        self.l.len()
    }

    pub fn tau(&self, i: usize) -> T {
        self.dt * T::from_usize(i).unwrap()
    }

    pub fn k(&self) -> &[T] {
        &self.k
    }

    /// Sampled `L_m`, `1 ≤ m ≤ m_max`.
    pub fn l(&self, m: usize) -> Option<&[T]> {
        m.checked_sub(1)
            .and_then(|i| self.l.get(i))
            .map(Vec::as_slice)
    }

    /// Sampled `P_m`, `0 ≤ m ≤ m_max`.
    pub fn p(&self, m: usize) -> Option<&[T]> {
        self.p.get(m).map(Vec::as_slice)
    }

    /// Trapezoidal `∫ L_m` over the grid.
    pub fn l_integral(&self, m: usize) -> Option<T> {
        m.checked_sub(1)
            .and_then(|i| self.l_integrals.get(i))
            .copied()
    }

    fn interpolate(&self, values: &[T], tau: T, what: &'static str) -> Result<T> {
        if !(tau >= T::zero()) || tau > self.t_max() {
            return Err(Error::Range {
                what,
                value: tau.as_f64(),
                t_max: self.t_max().as_f64(),
            });
        }
        let x = tau / self.dt;
        let i = x.floor().to_usize().unwrap_or(0).min(values.len() - 1);
        if i + 1 >= values.len() {
            return Ok(values[values.len() - 1]);
        }
        let frac = x - T::from_usize(i).unwrap();
        Ok(values[i] + (values[i + 1] - values[i]) * frac)
    }

    /// `P_m(τ_w)`: probability of exactly `m` further photons within `τ_w`.
    pub fn count_probability(&self, m: usize, tau_w: T) -> Result<T> {
        let values = self.p(m).ok_or_else(|| {
            domain(format!(
                "m = {m} exceeds the grid's m_max = {}",
                self.m_max()
            ))
        })?;
        self.interpolate(values, tau_w, "waiting time")
    }

    /// `P_0([t1, t2]) = P_0(t2)/P_0(t1)` from the sampled `P_0`.
    pub fn no_photon_in_interval(&self, t1: T, t2: T) -> Result<T> {
        if !(t1 >= T::zero()) || t2 < t1 {
            return Err(domain(format!("need 0 <= t1 <= t2, got [{t1}, {t2}]")));
        }
        let p0 = &self.p[0];
        let num = self.interpolate(p0, t2, "t2")?;
        let den = self.interpolate(p0, t1, "t1")?;
        if !(den > T::min_positive_value()) {
            return Err(Error::Numeric(format!(
                "P_0({t1}) underflows; interval is too deep in the tail"
            )));
        }
        Ok((num / den).min(T::one()).max(T::zero()))
    }

    /// Writes one function as `tau_s,value` CSV rows.
    pub fn write_csv<W: Write>(&self, which: GridFunction, mut out: W) -> std::io::Result<()> {
        let values = match which {
            GridFunction::K => Some(self.k()),
            GridFunction::L(m) => self.l(m),
            GridFunction::P(m) => self.p(m),
        }
        .ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "index beyond m_max")
        })?;
        writeln!(out, "tau_s,value")?;
        for (i, v) in values.iter().enumerate() {
            writeln!(out, "{:.8e},{:.8e}", self.tau(i).as_f64(), v.as_f64())?;
        }
        Ok(())
    }
}
