use dtrgp::dtr::{bayesian_bootstrap_weights, ipw_value};
use dtrgp::scenarios::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Composite Simpson value of "treat iff x > ψ" under `x ~ U(−1.5, 1.5)`.
fn simpson_value(psi: f64) -> f64 {
    let n = 2000;
    let (a, b) = (psi, 1.5);
    let h = (b - a) / n as f64;
    let s: f64 = (0..=n)
        .map(|i| {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * (x + 0.8) * x * (x - 0.9)
        })
        .sum();
    s * h / 3.0 / 3.0
}

#[test]
fn sim1_value_matches_quadrature() {
    for i in 0..=60 {
        let psi = -1.5 + 0.05 * i as f64;
        assert!((sim1_value(psi) - simpson_value(psi)).abs() < 1e-10, "ψ = {psi}");
    }
    assert!((simpson_value(0.9) - 0.165).abs() < 1e-3);
    assert_eq!(sim1_value(1.5), 0.0);
}

#[test]
fn sim1_has_two_interior_maxima() {
    let xs: Vec<f64> = (0..=3000).map(|i| -1.5 + 0.001 * i as f64).collect();
    let v: Vec<f64> = xs.iter().map(|&x| sim1_value(x)).collect();
    let peaks: Vec<usize> = (1..xs.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1]).collect();
    assert_eq!(peaks.len(), 2, "{:?}", peaks.iter().map(|&i| xs[i]).collect::<Vec<_>>());
    assert!((xs[peaks[0]] + 0.8).abs() < 2e-3 && (xs[peaks[1]] - 0.9).abs() < 2e-3);
    assert!(v[peaks[1]] > v[peaks[0]]);
    assert!(((v[peaks[1]] - v[peaks[0]]) - 0.014).abs() < 1e-3);
}

#[test]
fn sim1_monte_carlo_oracle_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for k in 0..20 {
        let psi: f64 = rng.gen_range(-1.5..1.5);
        let cfg = OracleConfig {
            draws: 1_000_000,
            seed: 1000 + k,
            noise: NoiseVariant::Standard,
        };
        let mc = monte_carlo_value(ScenarioId::Sim1, &[psi], &cfg).unwrap();
        let z = (mc.value - sim1_value(psi)) / mc.std_error;
        assert!(z.abs() < 3.0, "ψ = {psi}: z = {z}");
    }
}

#[test]
fn sim1_treatment_model_by_bins() {
    let c = generate_cohort(&ScenarioSpec::new(ScenarioId::Sim1, 100_000, 6)).unwrap();
    let bins = 10;
    let mut count = vec![0usize; bins];
    let mut treated = vec![0usize; bins];
    for t in c.trajectories() {
        let x = t.stage_covariates[0][0];
        assert!(x > -1.5 && x < 1.5);
        let b = (((x + 1.5) / 3.0) * bins as f64) as usize;
        count[b] += 1;
        treated[b] += usize::from(t.treatments[0]);
    }
    for b in 0..bins {
        // Average of expit(2x) over the bin by the midpoint rule on 100 cells.
        let lo = -1.5 + 0.3 * b as f64;
        let p: f64 = (0..100).map(|j| expit(2.0 * (lo + 0.3 * (j as f64 + 0.5) / 100.0))).sum::<f64>() / 100.0;
        let phat = treated[b] as f64 / count[b] as f64;
        let se = (p * (1.0 - p) / count[b] as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * se, "bin {b}: {phat} vs {p}");
    }
}

#[test]
fn sim2_second_covariate_shifts_with_first_treatment() {
    let c = generate_cohort(&ScenarioSpec::new(ScenarioId::Sim2, 100_000, 8)).unwrap();
    let n = c.len() as f64;
    let d: Vec<f64> = c
        .trajectories()
        .iter()
        .map(|t| t.stage_covariates[1][0] - 1.5 * f64::from(u8::from(t.treatments[0])))
        .collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean(x2 − 1.5 z1) = {mean}");
}

#[test]
fn large_cohort_ipw_hits_the_true_optimum_value() {
    let id = ScenarioId::Sim1;
    let c = generate_cohort(&ScenarioSpec::new(id, 100_000, 14)).unwrap();
    let p = true_propensities(id, &c);
    let fam = id.family();
    let v = ipw_value(&c, &fam, &[0.9], &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let boots: Vec<f64> = (0..200)
        .map(|_| {
            let w = bayesian_bootstrap_weights(c.len(), &mut rng);
            let cw = c.clone().with_weights(w).unwrap();
            ipw_value(&cw, &fam, &[0.9], &p).unwrap()
        })
        .collect();
    let m = boots.iter().sum::<f64>() / boots.len() as f64;
    let se = (boots.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    assert!((v - 0.165).abs() < 3.0 * se, "{v} ± {se}");
}

#[test]
fn cohorts_are_deterministic_per_seed() {
    for id in ScenarioId::ALL {
        let a = generate_cohort(&ScenarioSpec::new(id, 200, 5)).unwrap();
        let b = generate_cohort(&ScenarioSpec::new(id, 200, 5)).unwrap();
        let c = generate_cohort(&ScenarioSpec::new(id, 200, 6)).unwrap();
        assert_eq!(a.trajectories(), b.trajectories());
        assert_ne!(a.trajectories(), c.trajectories());
    }
}
