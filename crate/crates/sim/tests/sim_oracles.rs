use psibayes_core::bayes::GaussianPrior;
use psibayes_core::placement::PlacementPolicy;
use psibayes_core::psychometric::{logit, Design, Params, WeibullParams};
use psibayes_core::rng;
use psibayes_sim::weibull::integration_limit;
use psibayes_sim::*;

fn two_afc() -> Design {
    Design::two_afc(-5.0, 12.0).unwrap()
}

fn rate(o: &SimulatedObserver, x: f64, n: usize, seed: u64) -> f64 {
    let mut r = rng::from_seed(seed);
    (0..n).filter(|_| o.respond(x, 1, &mut r).unwrap()).count() as f64 / n as f64
}

#[test]
fn gaussian_observer_at_threshold_midpoint() {
    let p = Params::new(3.5, 0.5, -40.0).unwrap();
    let o = SimulatedObserver::gaussian(p, two_afc());
    assert!((rate(&o, 3.5, 100_000, 1) - 0.75).abs() < 0.005);
}

#[test]
fn weibull_observer_at_alpha() {
    // gamma + (1 - gamma)(1 - 1/e) with gamma = 1/2
    let expected = 0.5 + 0.5 * (1.0 - (-1.0f64).exp());
    assert!((expected - 0.816_060).abs() < 1e-6);
    let o = SimulatedObserver::weibull(WeibullParams::new(4.0, 3.0, 0.0).unwrap(), Design::two_afc(0.0, 10.0).unwrap());
    assert!((rate(&o, 4.0, 100_000, 2) - expected).abs() < 0.005);
    assert!(o.respond(-1.0, 1, &mut rng::from_seed(0)).is_err());
}

#[test]
fn zero_drift_matches_stationary_stream() {
    let p = Params::from_natural(3.5, 1.6, 0.02).unwrap();
    let g = SimulatedObserver::gaussian(p, two_afc());
    let z = SimulatedObserver::drifting(p, 0.0, two_afc());
    let (mut a, mut b) = (rng::from_seed(9), rng::from_seed(9));
    for t in 1..=2000 {
        let x = -5.0 + 17.0 * ((t * 37) % 101) as f64 / 100.0;
        assert_eq!(g.respond(x, t, &mut a).unwrap(), z.respond(x, t, &mut b).unwrap());
    }
}

#[test]
fn drift_moves_mu_linearly() {
    let p = Params::from_natural(3.5, 1.6, 0.02).unwrap();
    let o = SimulatedObserver::drifting(p, 0.01, two_afc());
    assert_eq!(o.params_at(1).unwrap().mu, 3.5);
    assert!((o.params_at(101).unwrap().mu - 2.5).abs() < 1e-12);
    assert_eq!(o.params_at(101).unwrap().nu, p.nu);
}

fn small_config(scheme: SamplingScheme, prior: GaussianPrior, reps: usize) -> StudyConfig {
    StudyConfig {
        label: "test".into(),
        observer: reference_observer(),
        scheme,
        prior,
        trial_counts: vec![60, 30],
        replications: reps,
        estimands: vec![Estimand::Mu, Estimand::Nu, Estimand::Threshold(0.75)],
        posterior_samples: 500,
    }
}

#[test]
fn studies_are_reproducible() {
    let cfg = small_config(SamplingScheme::UniformInterval { lo: 1.0, hi: 7.0 }, reference_prior(3.0, 0.5f64.sqrt()), 6);
    let a = run_study(&cfg, 5).unwrap().to_csv_string().unwrap();
    let b = run_study(&cfg, 5).unwrap().to_csv_string().unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("scheme,trials,mean_estimate,mse,reps,failures,estimand\n"));
    let c = run_study(&cfg, 6).unwrap().to_csv_string().unwrap();
    assert_ne!(a, c);
    let back = MseReport::from_csv(a.as_bytes()).unwrap();
    assert_eq!(back.rows.len(), 6);
    assert_eq!(back.rows[0].trials, 30);
    assert!(back.rows.iter().all(|r| r.mse >= 0.0 && r.reps + r.failures == 6));
}

#[test]
fn point_prior_at_truth_gives_zero_error() {
    let t = reference_observer().params_at(1).unwrap();
    let prior = GaussianPrior::new(t.to_array(), [1e-6, 1e-6, 1e-6]).unwrap();
    let levels = constant_stimuli_levels(2.0, 6.0, 6);
    let cfg = small_config(SamplingScheme::ConstantStimuli { levels }, prior, 4);
    let r = run_study(&cfg, 1).unwrap();
    for row in &r.rows {
        assert_eq!(row.failures, 0);
        assert!(row.mse < 1e-9, "{row:?}");
    }
}

#[test]
fn adaptive_study_runs() {
    let d = reference_observer().design;
    let policy = PlacementPolicy::psi(&d).with_sample_count(300);
    let mut cfg = small_config(SamplingScheme::Adaptive { policy }, reference_prior(3.0, 0.5f64.sqrt()), 2);
    cfg.trial_counts = vec![20];
    let r = run_study(&cfg, 3).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert!(r.rows.iter().all(|row| row.failures == 0));
}

#[test]
fn config_validation_and_toml() {
    let mut cfg = small_config(SamplingScheme::UniformInterval { lo: 1.0, hi: 7.0 }, reference_prior(3.0, 1.0), 3);
    let text = cfg.to_toml_string().unwrap();
    let back = StudyConfig::from_toml_str(&text).unwrap();
    assert_eq!(back.to_toml_string().unwrap(), text);
    cfg.replications = 0;
    assert!(run_study(&cfg, 0).is_err());
    cfg.replications = 1;
    cfg.scheme = SamplingScheme::UniformInterval { lo: 1.0, hi: 30.0 };
    assert!(run_study(&cfg, 0).is_err());
    let w = SimulatedObserver::weibull(WeibullParams::new(4.0, 3.0, 0.0).unwrap(), Design::two_afc(0.0, 10.0).unwrap());
    assert!(Estimand::Mu.truth(&w).is_err());
    let thr = Estimand::Threshold(0.816_060_279_414_278_6).truth(&w).unwrap();
    assert!((thr - 4.0).abs() < 1e-9);
}

#[test]
fn reference_prior_values() {
    let p = reference_prior(2.0, 0.5f64.sqrt());
    assert_eq!(p.mean, [2.0, 0.0, logit(0.02)]);
    assert_eq!(p.sd, [0.5f64.sqrt(), 0.5f64.sqrt(), 0.3]);
    let labels: Vec<String> = convergence_configs(&StudyOptions::default()).unwrap().into_iter().map(|c| c.label).collect();
    assert_eq!(
        labels,
        ["psi", "uniform-wide", "uniform-medium", "uniform-tight", "constant-wide", "constant-medium", "constant-tight"]
    );
}

/// Independent quadrature: trapezoid rule on 200000 panels with libm's erfc.
fn reference_objective(mu: f64, sigma: f64, alpha: f64, beta: f64, x_hi: f64) -> f64 {
    let n = 200_000;
    let h = x_hi / n as f64;
    let f = |x: f64| {
        let g = 0.5 * libm::erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2));
        let w = 1.0 - (-(x / alpha).powf(beta)).exp();
        (g - w).powi(2)
    };
    let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    0.25 * h * (0.5 * (f(0.0) + f(x_hi)) + inner)
}

#[test]
fn weibull_match_is_a_local_minimum() {
    let target = Params::from_natural(6.0, 0.5f64.exp(), 0.02).unwrap();
    let m = match_weibull(&target, 0.5, 0.0).unwrap();
    let (a, b) = (m.params.alpha, m.params.beta);
    let x_hi = integration_limit(&target);
    let at = |a: f64, b: f64| reference_objective(6.0, 0.5f64.exp(), a, b, x_hi);
    let best = at(a, b);
    assert!((best - m.objective).abs() < 1e-9 * best.max(1e-6) + 1e-12);
    for (da, db) in [(1.01, 1.0), (0.99, 1.0), (1.0, 1.01), (1.0, 0.99)] {
        assert!(at(a * da, b * db) > best);
    }
    let naive = at(6.0, 1.0);
    assert!(naive > 10.0 * best, "naive {naive} best {best}");
    // lapse and chance only rescale the objective
    let m2 = match_weibull(&target, 0.0, 0.1).unwrap();
    assert!((m2.params.alpha - a).abs() < 1e-4 * a && (m2.params.beta - b).abs() < 1e-4 * b);
}

#[test]
fn ppc_stationary_run() {
    let o = reference_observer();
    let prior = reference_prior(3.0, 0.5f64.sqrt());
    let pol = PlacementPolicy::psi(&o.design).with_sample_count(300);
    let obs = SimulatedObserver::drifting(o.params_at(1).unwrap(), 0.0, o.design);
    let run = ppc_dataset(&obs, &prior, &pol, 150, 4).unwrap();
    assert_eq!(run, ppc_dataset(&obs, &prior, &pol, 150, 4).unwrap());
    assert_eq!(run.triplets.len(), 150);
    assert_eq!(run.triplets[0].t, 1);
    assert!(run.triplets.iter().zip(run.data.trials()).all(|(t, r)| t.x == r.x && t.r == r.response));

    let early = run.data.success_rate(0..50);
    let late = run.data.success_rate(100..150);
    let pooled = run.data.success_rate(0..150);
    let se = (pooled * (1.0 - pooled) * (2.0 / 50.0)).sqrt();
    assert!((late - early).abs() < 3.0 * se, "early {early} late {late}");

    let c = late_block_check(&run, &prior, 200, 8).unwrap();
    assert_eq!(c.replicate_rates.len(), 200);
    assert!(c.replicate_rates.windows(2).all(|w| w[0] <= w[1]));
    assert!((0.0..=1.0).contains(&c.tail_fraction));
    assert_eq!(c, late_block_check(&run, &prior, 200, 8).unwrap());
}
