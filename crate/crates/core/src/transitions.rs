//! Conditional probabilities of consecutive generator outcomes.
//!
//! After an outcome on detector `first`, that detector is dead for `τ_dead`.
//! What the generator reports next is decomposed into four terms:
//!
//! 1. the other detector clicks in `[τ_cw, τ_dead − τ_cw]`;
//! 2. the other detector stays silent through `[τ_cw, τ_dead]`, so both are
//!    live again and [`p_out_dead`] decides;
//! 3. the other detector clicks in the last `τ_cw` of the dead time and
//!    `first` stays silent during the matching window once it is live again;
//! 4. as 3, but `first` does click, giving a coincidence.
//!
//! The tail terms are integrated with 32-point Gauss–Legendre quadrature and
//! the interval survival probability of the attenuated source.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::detection::{rate_bundle, Detector, DetectorChain, RateBundle};
use crate::error::{domain, Error, Result};
use crate::real::Real;
use crate::source::LightSource;
use crate::waiting_time::ln_survival;

/// Metadata tag attached to every model built with the aligned-dead-time
/// treatment of coincidences.
pub const APPROX_ALIGNED_DEAD_TIMES: &str = "approx:coincidence-deadtime-aligned";

const ROW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeMode {
    #[serde(rename = "discard")]
    DiscardCoincidences,
    #[serde(rename = "keep")]
    KeepCoincidences,
}

impl OutcomeMode {
    pub fn alphabet(self) -> &'static [Outcome] {
        match self {
            Self::DiscardCoincidences => &[Outcome::A, Outcome::B],
            Self::KeepCoincidences => &[Outcome::A, Outcome::B, Outcome::AB],
        }
    }

    pub fn len(self) -> usize {
        self.alphabet().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DiscardCoincidences => "discard",
            Self::KeepCoincidences => "keep",
        }
    }
}

impl std::str::FromStr for OutcomeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discard" => Ok(Self::DiscardCoincidences),
            "keep" => Ok(Self::KeepCoincidences),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected discard or keep)"
            ))),
        }
    }
}

/// Generator outcome symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    A,
    B,
    AB,
}

impl Outcome {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        [Self::A, Self::B, Self::AB].get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
            Self::AB => "ab",
        }
    }
}

impl From<Detector> for Outcome {
    fn from(d: Detector) -> Self {
        match d {
            Detector::A => Self::A,
            Detector::B => Self::B,
        }
    }
}

/// Outcome distribution and one-step conditional matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionModel<T> {
    pub mode: OutcomeMode,
    /// `p(y)` indexed by [`Outcome::index`].
    pub p_y: Vec<T>,
    /// `p_x_given_y[y][x] = p(x|y)`.
    pub p_x_given_y: Vec<Vec<T>>,
    /// Approximation tags such as [`APPROX_ALIGNED_DEAD_TIMES`].
    pub approximations: Vec<String>,
    /// Rows in which negative terms were clamped to zero before renormalizing.
    pub clamped_rows: Vec<Outcome>,
}

impl<T: Real> TransitionModel<T> {
    /// `p(x|y)`.
    pub fn p(&self, x: Outcome, y: Outcome) -> T {
        self.p_x_given_y[y.index()][x.index()]
    }

    /// Builds a model from explicit probabilities, checking normalization.
    pub fn from_parts(mode: OutcomeMode, p_y: Vec<T>, p_x_given_y: Vec<Vec<T>>) -> Result<Self> {
        let n = mode.len();
        if p_y.len() != n || p_x_given_y.len() != n || p_x_given_y.iter().any(|r| r.len() != n) {
            return Err(domain(format!("{} mode needs {n} outcomes", mode.name())));
        }
        let tol = T::lit(1e-9);
        let check = |v: &[T], name: String| -> Result<()> {
            let sum: T = v.iter().copied().sum();
            if v.iter().any(|p| !(*p >= T::zero())) || (sum - T::one()).abs() > tol {
                return Err(Error::ModelConsistency {
                    row: name,
                    sum: sum.as_f64(),
                });
            }
            Ok(())
        };
        check(&p_y, "p(y)".into())?;
        for (y, row) in p_x_given_y.iter().enumerate() {
            check(row, Outcome::from_index(y).unwrap().label().into())?;
        }
        Ok(Self {
            mode,
            p_y,
            p_x_given_y,
            approximations: Vec::new(),
            clamped_rows: Vec::new(),
        })
    }
}

/// Abscissae and weights of the 32-point Gauss–Legendre rule on `[-1, 1]`.
fn gauss_legendre_32() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

/// `∫_0^h f` with the 32-point rule.
pub(crate) fn integrate_gl32<T: Real>(h: T, mut f: impl FnMut(T) -> T) -> T {
    let half = T::lit(0.5) * h;
    gauss_legendre_32()
        .iter()
        .map(|&(x, w)| T::lit(w) * f(half * (T::one() + T::lit(x))))
        .sum::<T>()
        * half
}

/// Probabilities of each outcome once both detectors are live, indexed by
/// [`Outcome::index`] (two entries in discard mode, three in keep mode).
pub fn p_out_dead_all<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
) -> Vec<T> {
    let (pa, pb) = (chain.p_a, chain.p_b());
    let cw = chain.tau_cw;
    // Survival of the partner detector's stream over the window.
    let ln_p0_b = ln_survival(source, chain.eta(Detector::B), cw);
    let ln_p0_a = ln_survival(source, chain.eta(Detector::A), cw);
    match mode {
        OutcomeMode::DiscardCoincidences => {
            // p_a e^{ln_b} / (p_a e^{ln_b} + p_b e^{ln_a}), stable for deep tails.
            let pa_out = T::one() / (T::one() + (pb / pa) * (ln_p0_a - ln_p0_b).exp());
            vec![pa_out, T::one() - pa_out]
        }
        OutcomeMode::KeepCoincidences => {
            let a = pa * ln_p0_b.exp();
            let b = pb * ln_p0_a.exp();
            vec![a, b, (T::one() - a - b).max(T::zero())]
        }
    }
}

/// Probability that `target` is the next outcome once both detectors are live.
pub fn p_out_dead<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
    target: Outcome,
) -> Result<T> {
    p_out_dead_all(source, chain, mode)
        .get(target.index())
        .copied()
        .ok_or_else(|| domain("coincidence outcome does not exist in discard mode"))
}

/// The four terms of the row conditioned on an outcome of `first`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTerms<T> {
    pub other_clicks_early: T,
    pub other_silent: T,
    pub tail_other_only: T,
    pub tail_coincidence: T,
}

pub fn row_terms<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    bundle: &RateBundle<T>,
    first: Detector,
) -> RowTerms<T> {
    let other = first.other();
    let (cw, td) = (chain.tau_cw, chain.tau_dead);
    let scale = bundle.click(other) / (T::one() - bundle.p_coinc(other));
    let eta_first = chain.eta(first);
    let ln_end = ln_survival(source, eta_first, cw);

    let mut t3 = T::zero();
    let mut t4 = T::zero();
    if cw > T::zero() {
        let nodes = |tau: T| {
            let density = scale * source.g2(td - cw + tau);
            let silent = (ln_end - ln_survival(source, eta_first, cw - tau)).exp();
            (density, silent)
        };
        t3 = integrate_gl32(cw, |tau| {
            let (d, s) = nodes(tau);
            d * s
        });
        t4 = integrate_gl32(cw, |tau| {
            let (d, s) = nodes(tau);
            d * (T::one() - s)
        });
    }
    RowTerms {
        other_clicks_early: scale * source.g2_integral(cw, td - cw),
        other_silent: T::one() - scale * source.g2_integral(cw, td),
        tail_other_only: t3,
        tail_coincidence: t4,
    }
}

fn finish_row<T: Real>(
    mut row: Vec<T>,
    label: Outcome,
    clamped: &mut Vec<Outcome>,
) -> Result<Vec<T>> {
    let sum: T = row.iter().copied().sum();
    if !sum.is_finite() || (sum - T::one()).abs() > T::lit(ROW_TOL) {
        return Err(Error::ModelConsistency {
            row: label.label().into(),
            sum: sum.as_f64(),
        });
    }
    if row.iter().any(|p| *p < T::zero()) {
        clamped.push(label);
        for p in row.iter_mut() {
            *p = p.max(T::zero());
        }
    }
    let sum: T = row.iter().copied().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
    Ok(row)
}

/// Normalized outcome shares `p(y)` of a rate bundle.
pub fn outcome_distribution<T: Real>(bundle: &RateBundle<T>, mode: OutcomeMode) -> Result<Vec<T>> {
    let mut v = vec![bundle.lambda_bit_a, bundle.lambda_bit_b];
    if mode == OutcomeMode::KeepCoincidences {
        v.push(bundle.lambda_coinc);
    }
    let total: T = v.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(domain("total outcome rate is zero"));
    }
    Ok(v.into_iter().map(|r| r / total).collect())
}

/// Outcome rate: bits only in discard mode, bits plus coincidences in keep mode.
pub fn outcome_rate<T: Real>(bundle: &RateBundle<T>, mode: OutcomeMode) -> T {
    match mode {
        OutcomeMode::DiscardCoincidences => bundle.lambda_bit_total,
        OutcomeMode::KeepCoincidences => bundle.lambda_bit_total + bundle.lambda_coinc,
    }
}

/// Full transition model for one operating point.
pub fn transition_matrix<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
) -> Result<TransitionModel<T>> {
    let bundle = rate_bundle(source, chain)?;
    transition_matrix_with(source, chain, mode, &bundle)
}

/// As [`transition_matrix`], reusing an already computed rate bundle.
pub fn transition_matrix_with<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
    bundle: &RateBundle<T>,
) -> Result<TransitionModel<T>> {
    let p_out = p_out_dead_all(source, chain, mode);
    let n = mode.len();
    let mut clamped = Vec::new();
    let mut rows = Vec::with_capacity(n);

    for first in [Detector::A, Detector::B] {
        let t = row_terms(source, chain, bundle, first);
        let (f, o) = (
            Outcome::from(first).index(),
            Outcome::from(first.other()).index(),
        );
        let mut row = vec![T::zero(); n];
        match mode {
            OutcomeMode::DiscardCoincidences => {
                row[o] = t.other_clicks_early
                    + t.tail_other_only
                    + (t.other_silent + t.tail_coincidence) * p_out[o];
                row[f] = (t.other_silent + t.tail_coincidence) * p_out[f];
            }
            OutcomeMode::KeepCoincidences => {
                let ab = Outcome::AB.index();
                row[o] = t.other_clicks_early + t.tail_other_only + t.other_silent * p_out[o];
                row[f] = t.other_silent * p_out[f];
                row[ab] = t.other_silent * p_out[ab] + t.tail_coincidence;
            }
        }
        rows.push(finish_row(row, first.into(), &mut clamped)?);
    }
    if mode == OutcomeMode::KeepCoincidences {
        rows.push(finish_row(p_out, Outcome::AB, &mut clamped)?);
    }

    Ok(TransitionModel {
        mode,
        p_y: outcome_distribution(bundle, mode)?,
        p_x_given_y: rows,
        approximations: vec![APPROX_ALIGNED_DEAD_TIMES.to_string()],
        clamped_rows: clamped,
    })
}
