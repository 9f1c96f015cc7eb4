use authsim_core::authengine::Method;
use authsim_core::sim::{empirical_cdf, run, ScenarioConfig, ThresholdMode};

fn channel_only(m_c: usize) -> ScenarioConfig {
    ScenarioConfig { sensors: 1, m_p: 0, m_c, ..Default::default() }
}

#[test]
fn single_antenna_channel_attack_hits_target() {
    // One antenna makes the chi-square model exact: 10 instants × 10⁴ packets.
    let cfg = ScenarioConfig { horizon: 11, packets_per_instant: 10_000, seed: 21, ..channel_only(1) };
    let recs = run(&cfg).unwrap();
    assert_eq!(recs.len(), 10);
    let accepted: u64 = recs.iter().map(|r| r.accepted[2]).sum();
    let n = (recs.len() * cfg.packets_per_instant) as f64;
    let p = accepted as f64 / n;
    let se = (0.05 * 0.95 / n).sqrt();
    assert!((p - 0.05).abs() <= 4.0 * se, "empirical {p}, SE {se}");
    for r in &recs {
        assert!((r.analytic.p_fn_2.value() - 0.05).abs() < 1e-8);
        assert_eq!(r.opt_flags, 0);
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = ScenarioConfig { horizon: 9, packets_per_instant: 300, replications: 3, seed: 5, ..Default::default() };
    let a = run(&cfg).unwrap();
    assert_eq!(a, run(&cfg).unwrap());
    assert_eq!(a.len(), 3 * (9 - 3));
    let b = run(&ScenarioConfig { seed: 6, ..cfg.clone() }).unwrap();
    assert_ne!(a, b);
    // Replications are independent of how many run alongside them.
    let one = run(&ScenarioConfig { replications: 1, ..cfg }).unwrap();
    assert_eq!(&a[..6], &one[..]);
}

#[test]
fn zero_threshold_rejects_everything() {
    let cfg = ScenarioConfig {
        horizon: 8,
        packets_per_instant: 200,
        threshold_mode: ThresholdMode::Fixed,
        eta_p: 0.0,
        eta_c: 0.0,
        ..Default::default()
    };
    for r in run(&cfg).unwrap() {
        assert_eq!(r.accepted, [0, 0, 0]);
        assert_eq!(r.analytic_array(), [0.0, 0.0, 0.0]);
        assert_eq!(r.opt_iters, 0);
    }
}

#[test]
fn infinite_threshold_accepts_everything() {
    let cfg = ScenarioConfig {
        horizon: 8,
        packets_per_instant: 200,
        threshold_mode: ThresholdMode::Fixed,
        eta_p: f64::INFINITY,
        eta_c: f64::INFINITY,
        method: Method::Gaussian,
        ..Default::default()
    };
    for r in run(&cfg).unwrap() {
        assert_eq!(r.accepted, [200, 200, 200]);
        assert_eq!(r.analytic_array(), [1.0, 1.0, 1.0]);
    }
}

#[test]
fn cdf_is_a_staircase() {
    let cfg = ScenarioConfig { horizon: 30, packets_per_instant: 200, ..Default::default() };
    let recs = run(&cfg).unwrap();
    let cdf = empirical_cdf(&recs.iter().map(|r| r.empirical()[2]).collect::<Vec<_>>()).unwrap();
    assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
    assert_eq!(cdf.last().unwrap().1, 1.0);
}

#[test]
fn exact_case_matches_analysis() {
    let cfg = ScenarioConfig { horizon: 41, packets_per_instant: 4000, seed: 8, ..channel_only(1) };
    let n = cfg.packets_per_instant as f64;
    let recs = run(&cfg).unwrap();
    // The device's channel does not depend on the true state: exact at every instant.
    for r in &recs {
        let (a, e) = (r.analytic_array()[2], r.empirical()[2]);
        assert!((a - e).abs() <= 4.0 * (a * (1.0 - a) / n).sqrt(), "t={}: analytic {a} empirical {e}", r.t);
    }
    // Legitimate packets share the instant's true state, so they agree only on average.
    let diffs: Vec<f64> = recs.iter().map(|r| r.empirical()[0] - r.analytic_array()[0]).collect();
    let (mean, std) = authsim_core::sim::mean_std(&diffs);
    assert!(mean.abs() <= 4.0 * std / (diffs.len() as f64).sqrt(), "mean gap {mean}, spread {std}");
}

#[test]
fn optimized_security_level_is_constant() {
    let base = ScenarioConfig { horizon: 60, packets_per_instant: 50, ..Default::default() };
    let analytic_std = |cfg: &ScenarioConfig, k: usize| {
        authsim_core::sim::mean_std(&run(cfg).unwrap().iter().map(|r| r.analytic_array()[k]).collect::<Vec<_>>()).1
    };
    let fixed = ScenarioConfig { threshold_mode: ThresholdMode::Fixed, eta_p: 18.0, eta_c: 80.0, ..base.clone() };
    for k in [1, 2] {
        let opt = analytic_std(&base, k);
        assert!(opt <= 1e-6, "attacker {k}: {opt}");
        assert!(analytic_std(&fixed, k) > opt);
    }
}

#[test]
fn cdf_examples() {
    assert_eq!(empirical_cdf(&[0.5]).unwrap(), vec![(0.5, 1.0)]);
    assert_eq!(empirical_cdf(&[0.1, 0.3, 0.1]).unwrap(), vec![(0.1, 2.0 / 3.0), (0.3, 1.0)]);
    assert!(empirical_cdf(&[]).is_err());
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let u: Vec<f64> = (0..10_000).map(|_| r.random()).collect();
    let sup = empirical_cdf(&u).unwrap().iter().map(|&(x, f)| (f - x).abs()).fold(0.0, f64::max);
    assert!(sup <= 0.03);
}
