use qrng_lab::detection::{permutation_probability, rate_bundle};
use qrng_lab::simulate::{
    estimate_statistics, rng_for, simulate_into, simulate_stream, InterarrivalSampler, NullSink,
    SimConfig,
};
use qrng_lab::waiting_time::survival;
use qrng_lab::{DetectorChainF64, LightSource, Outcome, OutcomeMode};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

fn config(source: LightSource<f64>, duration: f64, seed: u64) -> SimConfig {
    SimConfig {
        source,
        chain: DetectorChainF64::default(),
        mode: OutcomeMode::KeepCoincidences,
        duration,
        seed,
        jitter_enabled: false,
    }
}

#[test]
fn sps_interarrivals_pass_kolmogorov_smirnov() {
    let src = LightSource::single_photon(3e7, 1e8).unwrap();
    let sampler = InterarrivalSampler::new(&src).unwrap();
    let mut rng = rng_for(8, 0);
    let n = 1_000_000;
    let mut xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = 1.0 - survival(&src, 1.0, x).unwrap();
        d = d
            .max((f - i as f64 / n as f64).abs())
            .max(((i + 1) as f64 / n as f64 - f).abs());
    }
    let critical = 1.628 / (n as f64).sqrt();
    assert!(d < critical, "D = {d:e}, critical {critical:e}");
}

#[test]
fn laser_window_counts_pass_chi_square() {
    let lambda = 1e7;
    let window = 3.0 / lambda;
    let sampler = InterarrivalSampler::new(&LightSource::laser(lambda).unwrap()).unwrap();
    let mut rng = rng_for(9, 0);
    let bins = 10;
    let mut counts = vec![0u64; bins + 1];
    let trials = 100_000;
    let mut t = 0.0;
    for _ in 0..trials {
        // Reference photon at `t`; count photons in (t, t + window].
        let end = t + window;
        let mut m = 0;
        loop {
            t += sampler.sample(&mut rng);
            if t > end {
                break;
            }
            m += 1;
        }
        counts[m.min(bins)] += 1;
    }
    let pois = Poisson::new(3.0).unwrap();
    let mut chi2 = 0.0;
    for (m, &c) in counts.iter().enumerate() {
        let p = if m < bins {
            pois.pmf(m as u64)
        } else {
            1.0 - pois.cdf(bins as u64 - 1)
        };
        let e = p * trials as f64;
        chi2 += (c as f64 - e).powi(2) / e;
    }
    let p_value = 1.0 - ChiSquared::new(bins as f64).unwrap().cdf(chi2);
    assert!(p_value > 0.01, "chi2 {chi2}, p {p_value}");
}

#[test]
fn jitter_flip_rate_near_the_window_edge_matches_epsilon() {
    let chain = DetectorChainF64 {
        tau_cw: 1e-9,
        sigma_jitt: 1e-9,
        ..Default::default()
    };
    let cfg = SimConfig {
        chain,
        jitter_enabled: true,
        ..config(LightSource::laser(5e7).unwrap(), 0.1, 21)
    };
    let mut records = simulate_stream(&cfg).unwrap().records;
    records.sort_by(|a, b| a.true_time.total_cmp(&b.true_time));
    let (mut near, mut flipped, mut expected) = (0u64, 0u64, 0.0);
    for w in records.windows(2) {
        let gap = w[1].true_time - w[0].true_time;
        if w[0].detector != w[1].detector && gap > chain.tau_cw && gap < chain.tau_cw + 0.5e-9 {
            near += 1;
            flipped += (w[1].time < w[0].time) as u64;
            expected += permutation_probability(gap, chain.sigma_jitt).unwrap();
        }
    }
    let eps = permutation_probability(chain.tau_cw, chain.sigma_jitt).unwrap();
    assert!(near > 5000, "{near}");
    let (frac, expected) = (flipped as f64 / near as f64, expected / near as f64);
    let sigma = (expected * (1.0 - expected) / near as f64).sqrt();
    assert!(
        (frac - expected).abs() < 4.0 * sigma,
        "flip fraction {frac}, expected {expected}, n {near}"
    );
    assert!(expected <= eps && expected > 0.5 * eps);
}

#[test]
fn overall_flip_fraction_is_bounded_by_epsilon() {
    let chain = DetectorChainF64::default();
    let cfg = SimConfig {
        jitter_enabled: true,
        ..config(LightSource::laser(5e7).unwrap(), 0.02, 3)
    };
    let t = simulate_into(&cfg, &mut NullSink).unwrap();
    let eps = permutation_probability(chain.tau_cw, chain.sigma_jitt).unwrap();
    assert!(t.permutation_candidates > 10_000);
    assert!((t.permutations as f64) <= eps * t.permutation_candidates as f64 + 3.0);
}

#[test]
fn coincidence_row_is_near_uniform_at_the_equal_probability_point() {
    let t = simulate_into(
        &config(LightSource::laser(6.73e8).unwrap(), 0.05, 4),
        &mut NullSink,
    )
    .unwrap();
    let stats = estimate_statistics(&t, OutcomeMode::KeepCoincidences).unwrap();
    let n = stats.row_counts[Outcome::AB.index()] as f64;
    assert!(n > 50_000.0);
    for x in [Outcome::A, Outcome::B, Outcome::AB] {
        let p = stats.model.p(x, Outcome::AB);
        assert!((p - 1.0 / 3.0).abs() < 0.025, "p({}|ab) = {p}", x.label());
    }
}

#[test]
fn sps_produces_more_bits_than_laser() {
    let sps = simulate_into(
        &config(
            LightSource::single_photon_at_rate(5e7, 1e8).unwrap(),
            0.05,
            5,
        ),
        &mut NullSink,
    )
    .unwrap();
    let laser = simulate_into(
        &config(LightSource::laser(5e7).unwrap(), 0.05, 5),
        &mut NullSink,
    )
    .unwrap();
    assert!(sps.singles[0] + sps.singles[1] > laser.singles[0] + laser.singles[1]);
}

#[test]
fn laser_rates_and_rows_agree_with_the_model() {
    let chain = DetectorChainF64::default();
    for (i, lambda) in [3e6, 3e7, 2e8].into_iter().enumerate() {
        let src = LightSource::laser(lambda).unwrap();
        let t = simulate_into(&config(src, 0.2, 40 + i as u64), &mut NullSink).unwrap();
        let ana = rate_bundle(&src, &chain).unwrap();
        let stats = estimate_statistics(&t, OutcomeMode::DiscardCoincidences).unwrap();
        let z =
            (stats.rates.lambda_click_a - ana.lambda_click_a) / (ana.lambda_click_a / 0.2).sqrt();
        assert!(z.abs() < 4.0, "lambda {lambda}: z {z}");
        let p_ba = stats.model.p(Outcome::B, Outcome::A);
        let model = qrng_lab::transitions::transition_matrix(
            &src,
            &chain,
            OutcomeMode::DiscardCoincidences,
        )
        .unwrap();
        let n = stats.row_counts[0] as f64;
        let want = model.p(Outcome::B, Outcome::A);
        assert!(
            (p_ba - want).abs() < 4.0 * (want * (1.0 - want) / n).sqrt() + 1e-3,
            "lambda {lambda}"
        );
    }
}

#[test]
fn reruns_are_bit_identical_and_seeds_differ() {
    let cfg = SimConfig {
        jitter_enabled: true,
        ..config(
            LightSource::single_photon_at_rate(4e7, 1e8).unwrap(),
            5e-3,
            6,
        )
    };
    let a = simulate_stream(&cfg).unwrap();
    let b = simulate_stream(&cfg).unwrap();
    assert_eq!(a, b);
    let c = simulate_stream(&SimConfig { seed: 7, ..cfg }).unwrap();
    assert_ne!(a.tallies, c.tallies);
}
