use proptest::prelude::*;
use qrng_lab::entropy::{entropy_report, min_entropy, renyi, shannon};
use qrng_lab::transitions::{p_out_dead_all, transition_matrix};
use qrng_lab::{DetectorChainF64, LightSource, Outcome, OutcomeMode};

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn source(laser: bool, log_lambda: f64) -> LightSource<f64> {
    if laser {
        LightSource::laser(10f64.powf(log_lambda)).unwrap()
    } else {
        LightSource::single_photon_at_rate(1e8 * (1.0 - 10f64.powf(-log_lambda / 2.0)), 1e8)
            .unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entropies_are_ordered(w in prop::collection::vec(1e-9f64..1.0, 2..8), alpha in 1.01f64..30.0) {
        let p = normalize(w);
        let (hm, ha, hs) = (min_entropy(&p).unwrap(), renyi(&p, alpha).unwrap(), shannon(&p).unwrap());
        prop_assert!(hm <= ha + 1e-12);
        prop_assert!(ha <= hs + 1e-12);
        prop_assert!(hs <= (p.len() as f64).log2() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn transition_rows_are_stochastic(laser in any::<bool>(), log_lambda in 5.0f64..12.0, keep in any::<bool>()) {
        let mode = if keep { OutcomeMode::KeepCoincidences } else { OutcomeMode::DiscardCoincidences };
        let m = transition_matrix(&source(laser, log_lambda), &DetectorChainF64::default(), mode).unwrap();
        for row in &m.p_x_given_y {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        prop_assert!((m.p_y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discard_rows_marginalize_keep_rows(laser in any::<bool>(), log_lambda in 5.0f64..9.5) {
        let chain = DetectorChainF64::default();
        let src = source(laser, log_lambda);
        let keep = transition_matrix(&src, &chain, OutcomeMode::KeepCoincidences).unwrap();
        let disc = transition_matrix(&src, &chain, OutcomeMode::DiscardCoincidences).unwrap();
        prop_assume!(keep.clamped_rows.is_empty() && disc.clamped_rows.is_empty());
        let live = p_out_dead_all(&src, &chain, OutcomeMode::DiscardCoincidences);
        for y in [Outcome::A, Outcome::B] {
            for x in [Outcome::A, Outcome::B] {
                let folded = keep.p(x, y) + keep.p(Outcome::AB, y) * live[x.index()];
                prop_assert!((disc.p(x, y) - folded).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entropy_rates_are_bounded_by_outcome_rate(laser in any::<bool>(), log_lambda in 5.0f64..12.0, keep in any::<bool>()) {
        let mode = if keep { OutcomeMode::KeepCoincidences } else { OutcomeMode::DiscardCoincidences };
        let r = entropy_report(&source(laser, log_lambda), &DetectorChainF64::default(), mode).unwrap();
        prop_assert!(r.h_min_rate <= r.h_shannon_rate + 1e-12 * r.outcome_rate);
        prop_assert!(r.h_shannon_rate <= r.outcome_rate * (mode.len() as f64).log2() * (1.0 + 1e-12));
    }
}
