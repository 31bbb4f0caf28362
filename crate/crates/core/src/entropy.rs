//! Entropy measures, entropy-rate curves and the optimum operating point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{rate_bundle, DetectorChain};
use crate::error::{domain, Result};
use crate::real::{log_space, Real};
use crate::source::LightSource;
use crate::transitions::{outcome_rate, transition_matrix_with, OutcomeMode, TransitionModel};

fn check_distribution<T: Real>(dist: &[T]) -> Result<()> {
    if dist.is_empty() || dist.iter().any(|p| !(*p >= T::zero())) {
        return Err(domain(
            "distribution must be non-empty with non-negative entries",
        ));
    }
    let sum: T = dist.iter().copied().sum();
    if (sum - T::one()).abs() > T::lit(1e-9) {
        return Err(domain(format!("distribution sums to {sum}, not 1")));
    }
    Ok(())
}

fn shannon_unchecked<T: Real>(dist: &[T]) -> T {
    -dist
        .iter()
        .filter(|p| **p > T::zero())
        .map(|&p| p * p.log2())
        .sum::<T>()
}

/// Shannon entropy in bits.
pub fn shannon<T: Real>(dist: &[T]) -> Result<T> {
    check_distribution(dist)?;
    Ok(shannon_unchecked(dist))
}

/// Min-entropy `-log2 max p` in bits.
pub fn min_entropy<T: Real>(dist: &[T]) -> Result<T> {
    check_distribution(dist)?;
    Ok(-dist.iter().copied().fold(T::zero(), T::max).log2())
}

/// Rényi entropy of order `alpha` in bits.
pub fn renyi<T: Real>(dist: &[T], alpha: T) -> Result<T> {
    check_distribution(dist)?;
    if !(alpha > T::zero()) || alpha == T::one() || !alpha.is_finite() {
        return Err(domain(format!(
            "Rényi order must be positive, finite and not 1, got {alpha}"
        )));
    }
    // Factor out the largest probability so large orders do not underflow.
    let pmax = dist.iter().copied().fold(T::zero(), T::max);
    let s: T = dist
        .iter()
        .filter(|p| **p > T::zero())
        .map(|&p| (p / pmax).powf(alpha))
        .sum();
    Ok((alpha * pmax.log2() + s.log2()) / (T::one() - alpha))
}

/// Conditional Shannon and min-entropy `(H_Sh(X|Y), H_min(X|Y))` of a model.
pub fn conditional_entropies<T: Real>(model: &TransitionModel<T>) -> (T, T) {
    let mut h_sh = T::zero();
    let mut guess = T::zero();
    for (py, row) in model.p_y.iter().zip(&model.p_x_given_y) {
        h_sh += *py * shannon_unchecked(row);
        guess += *py * row.iter().copied().fold(T::zero(), T::max);
    }
    (h_sh, -guess.log2())
}

/// Entropy bookkeeping at one photon rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyReport<T> {
    pub mode: OutcomeMode,
    pub lambda: T,
    pub h_shannon_cond: T,
    pub h_min_cond: T,
    pub outcome_rate: T,
    pub h_shannon_rate: T,
    pub h_min_rate: T,
    /// True when a transition row needed clamping of negative terms.
    pub clamped: bool,
}

/// Photon source type swept over its emission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceFamily<T> {
    Laser,
    SinglePhoton { gamma: T },
}

impl<T: Real> SourceFamily<T> {
    pub fn at(&self, lambda: T) -> Result<LightSource<T>> {
        match *self {
            Self::Laser => LightSource::laser(lambda),
            Self::SinglePhoton { gamma } => LightSource::single_photon_at_rate(lambda, gamma),
        }
    }

    /// Default scan range for the optimum search.
    pub fn lambda_range(&self) -> (T, T) {
        match *self {
            Self::Laser => (T::lit(1e5), T::lit(1e12)),
            Self::SinglePhoton { gamma } => (T::lit(1e-3) * gamma, T::lit(0.9999) * gamma),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Laser => "laser",
            Self::SinglePhoton { .. } => "sps",
        }
    }
}

pub fn entropy_report<T: Real>(
    source: &LightSource<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
) -> Result<EntropyReport<T>> {
    let bundle = rate_bundle(source, chain)?;
    let model = transition_matrix_with(source, chain, mode, &bundle)?;
    let (h_sh, h_min) = conditional_entropies(&model);
    let rate = outcome_rate(&bundle, mode);
    Ok(EntropyReport {
        mode,
        lambda: source.emission_rate(),
        h_shannon_cond: h_sh,
        h_min_cond: h_min,
        outcome_rate: rate,
        h_shannon_rate: h_sh * rate,
        h_min_rate: h_min * rate,
        clamped: !model.clamped_rows.is_empty(),
    })
}

/// Entropy reports over `lambdas`, evaluated in parallel and returned in input order.
pub fn entropy_rate_curve<T: Real>(
    family: &SourceFamily<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
    lambdas: &[T],
) -> Result<Vec<EntropyReport<T>>> {
    lambdas
        .par_iter()
        .map(|&l| entropy_report(&family.at(l)?, chain, mode))
        .collect()
}

/// Quantity maximized by [`find_maximum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMetric {
    MinEntropy,
    Shannon,
}

impl RateMetric {
    fn of<T: Real>(self, r: &EntropyReport<T>) -> T {
        match self {
            Self::MinEntropy => r.h_min_rate,
            Self::Shannon => r.h_shannon_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimumPoint<T> {
    pub lambda_star: T,
    /// Pump rate at the optimum, single-photon source only.
    pub k_star: Option<T>,
    /// Maximized rate in bits/s (min-entropy rate unless stated otherwise).
    pub h_min_rate_star: T,
    /// Coarse scan found more than one local maximum; the global coarse maximum was refined.
    pub multimodal: bool,
}

pub const COARSE_POINTS: usize = 200;
pub const LAMBDA_REL_TOL: f64 = 1e-4;

/// Maximizes the min-entropy rate over the family's default rate range.
pub fn find_optimum<T: Real>(
    family: &SourceFamily<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
) -> Result<OptimumPoint<T>> {
    find_maximum(family, chain, mode, RateMetric::MinEntropy)
}

/// Coarse log-spaced scan followed by golden-section refinement in `ln λ`.
pub fn find_maximum<T: Real>(
    family: &SourceFamily<T>,
    chain: &DetectorChain<T>,
    mode: OutcomeMode,
    metric: RateMetric,
) -> Result<OptimumPoint<T>> {
    let (lo, hi) = family.lambda_range();
    let grid = log_space(lo, hi, COARSE_POINTS);
    let values: Vec<T> = entropy_rate_curve(family, chain, mode, &grid)?
        .iter()
        .map(|r| metric.of(r))
        .collect();

    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let peaks = (1..values.len() - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .count();

    let eval = |ln_l: T| -> Result<T> {
        Ok(metric.of(&entropy_report(&family.at(ln_l.exp())?, chain, mode)?))
    };
    let mut a = grid[best.saturating_sub(1)].ln();
    let mut b = grid[(best + 1).min(grid.len() - 1)].ln();
    let inv_phi = T::lit(0.5 * (5f64.sqrt() - 1.0));
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    while b - a > T::lit(LAMBDA_REL_TOL) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = eval(d)?;
        }
    }
    let (mut ln_star, mut f_star) = if fc > fd { (c, fc) } else { (d, fd) };
    if values[best] > f_star {
        ln_star = grid[best].ln();
        f_star = values[best];
    }
    let source = family.at(ln_star.exp())?;
    Ok(OptimumPoint {
        lambda_star: source.emission_rate(),
        k_star: source.pump_rate(),
        h_min_rate_star: f_star,
        multimodal: peaks > 1,
    })
}

/// Optimum rates of both sources in one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeComparison<T> {
    pub mode: OutcomeMode,
    pub laser: OptimumPoint<T>,
    pub sps: OptimumPoint<T>,
    /// `sps / laser − 1` of the optimum min-entropy rates.
    pub advantage: T,
}

/// Optimum points of both sources in both modes and the derived ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdvantageReport<T> {
    pub discard: ModeComparison<T>,
    pub keep: ModeComparison<T>,
    /// `keep / discard − 1` for the laser.
    pub laser_keep_gain: T,
    /// `keep / discard − 1` for the single-photon source.
    pub sps_keep_gain: T,
}

pub fn advantage_report<T: Real>(chain: &DetectorChain<T>, gamma: T) -> Result<AdvantageReport<T>> {
    let sps = SourceFamily::SinglePhoton { gamma };
    let compare = |mode| -> Result<ModeComparison<T>> {
        let l = find_optimum(&SourceFamily::Laser, chain, mode)?;
        let s = find_optimum(&sps, chain, mode)?;
        Ok(ModeComparison {
            mode,
            laser: l,
            sps: s,
            advantage: s.h_min_rate_star / l.h_min_rate_star - T::one(),
        })
    };
    let discard = compare(OutcomeMode::DiscardCoincidences)?;
    let keep = compare(OutcomeMode::KeepCoincidences)?;
    Ok(AdvantageReport {
        laser_keep_gain: keep.laser.h_min_rate_star / discard.laser.h_min_rate_star - T::one(),
        sps_keep_gain: keep.sps.h_min_rate_star / discard.sps.h_min_rate_star - T::one(),
        discard,
        keep,
    })
}

/// Parameter varied by a robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustnessParameter {
    /// Emitter lifetime `T1 = 1/Γ`, seconds.
    Lifetime,
    TauDead,
    EtaQe,
    PA,
}

impl RobustnessParameter {
    pub const ALL: [Self; 4] = [Self::Lifetime, Self::TauDead, Self::EtaQe, Self::PA];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lifetime => "t1",
            Self::TauDead => "tau_dead",
            Self::EtaQe => "eta_qe",
            Self::PA => "p_a",
        }
    }

    /// Sweep values used by the command-line robustness report.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Self::Lifetime => (1..=20).map(|n| n as f64 * 1e-9).collect(),
            Self::TauDead => (20..=60).step_by(5).map(|n| n as f64 * 1e-9).collect(),
            Self::EtaQe => (30..=70).map(|n| n as f64 / 100.0).collect(),
            Self::PA => (50..=75).map(|n| n as f64 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessRow<T> {
    pub parameter: RobustnessParameter,
    pub value: T,
    pub advantage_keep: T,
    pub advantage_discard: T,
}

/// sps-over-laser optimum advantage with one parameter changed from `chain`/`gamma`.
pub fn robustness_point<T: Real>(
    chain: &DetectorChain<T>,
    gamma: T,
    parameter: RobustnessParameter,
    value: T,
) -> Result<RobustnessRow<T>> {
    let mut chain = *chain;
    let mut gamma = gamma;
    match parameter {
        RobustnessParameter::Lifetime => gamma = value.recip(),
        RobustnessParameter::TauDead => chain.tau_dead = value,
        RobustnessParameter::EtaQe => chain.eta_qe = value,
        RobustnessParameter::PA => chain.p_a = value,
    }
    chain.validate()?;
    let report = advantage_report(&chain, gamma)?;
    Ok(RobustnessRow {
        parameter,
        value,
        advantage_keep: report.keep.advantage,
        advantage_discard: report.discard.advantage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::Outcome;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(shannon(&[1.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(
            shannon(&[1.0 / 3.0; 3]).unwrap(),
            3f64.log2(),
            max_relative = 1e-14
        );
        assert!(shannon(&[0.5, 0.6]).is_err());
        assert!(shannon(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn renyi_examples() {
        for alpha in [0.5, 2.0, 7.0] {
            assert_relative_eq!(renyi(&[0.25; 4], alpha).unwrap(), 2.0, max_relative = 1e-14);
        }
        assert_relative_eq!(
            renyi(&[0.75, 0.25], 2.0).unwrap(),
            0.678_071_905_112_637_7,
            max_relative = 1e-14
        );
        assert!((renyi(&[0.75f64, 0.25], 1000.0).unwrap() - 0.415_037_499_278_843_8).abs() < 2e-3);
        assert!(renyi(&[0.5, 0.5], 1.0).is_err());
        assert!(renyi(&[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn renyi_limits() {
        let p = [0.6f64, 0.3, 0.1];
        let sh = shannon(&p).unwrap();
        assert!((renyi(&p, 1.0 + 1e-6).unwrap() - sh).abs() < 1e-5);
        assert!((renyi(&p, 1.0 - 1e-6).unwrap() - sh).abs() < 1e-5);
        assert!((renyi(&p, 1e5).unwrap() - min_entropy(&p).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn conditional_examples() {
        let fair = TransitionModel::from_parts(
            OutcomeMode::DiscardCoincidences,
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(conditional_entropies(&fair), (1.0, 1.0));
        let alternating = TransitionModel::from_parts(
            OutcomeMode::DiscardCoincidences,
            vec![0.5, 0.5],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert_eq!(conditional_entropies(&alternating), (0.0, 0.0));
        let row = vec![0.2, 0.5, 0.3];
        let uniform_rows = TransitionModel::from_parts(
            OutcomeMode::KeepCoincidences,
            vec![0.4, 0.4, 0.2],
            vec![row.clone(), row.clone(), row.clone()],
        )
        .unwrap();
        let (h, m) = conditional_entropies(&uniform_rows);
        assert_relative_eq!(h, shannon(&row).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(m, min_entropy(&row).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn report_consistency() {
        let chain = DetectorChain::<f64>::default();
        let sps = SourceFamily::SinglePhoton { gamma: 1e8 };
        for mode in [
            OutcomeMode::DiscardCoincidences,
            OutcomeMode::KeepCoincidences,
        ] {
            for r in entropy_rate_curve(&sps, &chain, mode, &log_space(1e5, 0.9999e8, 50)).unwrap()
            {
                assert!(r.h_min_cond <= r.h_shannon_cond + 1e-12);
                assert!(r.h_min_cond <= (mode.len() as f64).log2() + 1e-12);
                assert_relative_eq!(
                    r.h_min_rate,
                    r.h_min_cond * r.outcome_rate,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn limits_of_entropy_rate() {
        let chain = DetectorChain::<f64>::default();
        for fam in [
            SourceFamily::Laser,
            SourceFamily::SinglePhoton { gamma: 1e8 },
        ] {
            let r = entropy_report(
                &fam.at(1e3).unwrap(),
                &chain,
                OutcomeMode::DiscardCoincidences,
            )
            .unwrap();
            assert!(r.h_min_cond > 0.9999);
        }
        let bright = entropy_report(
            &LightSource::laser(1e14).unwrap(),
            &chain,
            OutcomeMode::DiscardCoincidences,
        )
        .unwrap();
        assert!(bright.h_min_rate < 1e-3 * 8e6);
    }

    #[test]
    fn keep_mode_laser_shannon_exceeds_one_bit() {
        let chain = DetectorChain::<f64>::default();
        let grid = log_space(1e7, 1e10, 60);
        let curve = entropy_rate_curve(
            &SourceFamily::Laser,
            &chain,
            OutcomeMode::KeepCoincidences,
            &grid,
        )
        .unwrap();
        assert!(curve.iter().any(|r| r.h_shannon_cond > 1.0));
        let bright = entropy_report(
            &LightSource::laser(1e12).unwrap(),
            &chain,
            OutcomeMode::KeepCoincidences,
        );
        assert!(bright.unwrap().h_shannon_cond < 1.0);
    }

    #[test]
    fn curve_is_continuous() {
        // Adjacent jumps of the per-outcome entropy shrink with the step: a
        // discontinuity would not.
        let chain = DetectorChain::<f64>::default();
        let max_jump = |n: usize| {
            let c = entropy_rate_curve(
                &SourceFamily::Laser,
                &chain,
                OutcomeMode::KeepCoincidences,
                &log_space(1e5, 1e12, n),
            )
            .unwrap();
            c.windows(2)
                .map(|w| (w[1].h_min_cond - w[0].h_min_cond).abs())
                .fold(0.0f64, f64::max)
        };
        let (coarse, fine) = (max_jump(1000), max_jump(4000));
        assert!(coarse < 1e-2, "{coarse}");
        assert!(fine < 0.4 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn optimum_is_a_local_maximum() {
        let chain = DetectorChain::<f64>::default();
        let fam = SourceFamily::<f64>::Laser;
        let opt = find_optimum(&fam, &chain, OutcomeMode::DiscardCoincidences).unwrap();
        assert!(!opt.multimodal);
        assert!(opt.k_star.is_none());
        for f in [0.99, 1.01] {
            let r = entropy_report(
                &fam.at(opt.lambda_star * f).unwrap(),
                &chain,
                OutcomeMode::DiscardCoincidences,
            )
            .unwrap();
            assert!(r.h_min_rate <= opt.h_min_rate_star);
        }
    }

    #[test]
    fn single_precision_optimum() {
        let chain = DetectorChain::<f32>::default();
        let opt =
            find_optimum(&SourceFamily::Laser, &chain, OutcomeMode::KeepCoincidences).unwrap();
        assert!((opt.lambda_star / 6.14e7 - 1.0).abs() < 0.02);
    }

    #[test]
    fn deterministic_alternation_is_predictable() {
        let chain = DetectorChain::<f64>::default();
        let m = crate::transitions::transition_matrix(
            &LightSource::laser(1e13).unwrap(),
            &chain,
            OutcomeMode::DiscardCoincidences,
        )
        .unwrap();
        assert!(m.p(Outcome::B, Outcome::A) > 0.999);
        assert!(conditional_entropies(&m).1 < 0.01);
    }

    fn distribution() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6f64..1.0, 2..8).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn entropy_ordering(p in distribution()) {
            let sh = shannon(&p).unwrap();
            let mn = min_entropy(&p).unwrap();
            let mut prev = sh;
            for alpha in [2.0, 4.0, 16.0] {
                let h = renyi(&p, alpha).unwrap();
                prop_assert!(h <= prev + 1e-12);
                prop_assert!(h >= mn - 1e-12);
                prev = h;
            }
        }
    }
}
