//! Acceptance criteria, one status line each.
//!
//! Runs as a plain binary so the lines come out in order and unbuffered.
//! A FAIL is reported, not raised; set `DTRGP_ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a nonzero exit. Criterion 6 needs the trial CSV at
//! `DTRGP_ACTG175_CSV`.

use std::path::Path;
use std::time::Instant;

use dtrgp::bo::{expected_improvement, run_bo, BoConfig, GpType};
use dtrgp::case_study::{grid_bootstrap, load_cohort_csv, optimizer_uncertainty, CsvSchema, UncertaintyConfig};
use dtrgp::domain::Bounds;
use dtrgp::dtr::{
    bayesian_bootstrap_weights, fit_propensity, ipw_value, Cohort, FixedPropensities, IpwEstimator, PropensitySpec,
    RegimeFamily, Trajectory,
};
use dtrgp::gp::{
    estimate_pointwise_noise, sample_posterior_paths, Design, FitOptions, GpFit, KernelFamily, KernelSpec, NoiseSpec,
};
use dtrgp::harness::{child_seed, evaluate_design, run_replicates, summarize, Method, ReplicateConfig, SummaryRow};
use dtrgp::scenarios::{generate_cohort, monte_carlo_value, sim1_value, OracleConfig, ScenarioId, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const MASTER_SEED: u64 = 2024;
const REPLICATES: usize = 100;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Report {
    failed: bool,
}

impl Report {
    fn line(&mut self, id: &str, status: Status, detail: String, started: Instant) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        self.failed |= status == Status::Fail;
        println!("{tag} criterion {id}: {detail} [{:.0}s]", started.elapsed().as_secs_f64());
    }
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn row<'a>(rows: &'a [SummaryRow], method: Method, added: usize, quantity: &str) -> &'a SummaryRow {
    rows.iter()
        .find(|r| r.method == method && r.added == added && r.quantity == quantity)
        .unwrap_or_else(|| panic!("no summary row for {method:?} +{added} {quantity}"))
}

fn replicates(id: ScenarioId, methods: Vec<Method>) -> (Vec<SummaryRow>, Vec<dtrgp::harness::ReplicateResult>) {
    let cfg = ReplicateConfig::new(id, methods, REPLICATES, MASTER_SEED);
    let run = run_replicates(&cfg).expect("replicate run");
    for f in &run.failures {
        eprintln!("  replicate {} ({:?}) failed: {}", f.replicate, f.method, f.error);
    }
    (summarize(&run.results), run.results)
}

fn criteria_1_and_2(report: &mut Report) {
    let started = Instant::now();
    let (rows, results) = replicates(ScenarioId::Sim1, vec![Method::Grid, Method::HM]);
    let psi = &row(&rows, Method::HM, 25, "psi1").stats;
    let value = &row(&rows, Method::HM, 25, "value").stats;
    let ok = within(psi.median, 0.80, 0.93) && psi.iqr <= 0.6 && within(value.median, 0.15, 0.19);
    report.line(
        "1",
        status(ok),
        format!(
            "sim1 HM +25 median psi {:.3} (IQR {:.3}; want [0.80, 0.93], IQR <= 0.6), median value {:.3} (want [0.15, 0.19])",
            psi.median, psi.iqr, value.median
        ),
        started,
    );

    let grid = &row(&rows, Method::Grid, 0, "psi1").stats;
    let evals = |m: Method| {
        let mut e: Vec<usize> = results.iter().filter(|r| r.method == m).map(|r| r.evaluations).collect();
        e.sort_unstable();
        e.dedup();
        e
    };
    let (g, h) = (evals(Method::Grid), evals(Method::HM));
    let ok = within(grid.median, 0.75, 0.95) && grid.iqr >= 1.0 && g == [300] && h == [38];
    report.line(
        "2",
        status(ok),
        format!(
            "sim1 grid median psi {:.3} (IQR {:.3}; want [0.75, 0.95], IQR >= 1.0); evaluations grid {g:?} HM {h:?} (want [300], [38])",
            grid.median, grid.iqr
        ),
        started,
    );
}

fn criterion_3(report: &mut Report) {
    let started = Instant::now();
    let (rows, _) = replicates(ScenarioId::Sim2, vec![Method::HM, Method::HE]);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [Method::HM, Method::HE] {
        let p1 = row(&rows, m, 25, "psi1").stats.median;
        let p2 = row(&rows, m, 25, "psi2").stats.median;
        let v = row(&rows, m, 25, "value").stats.median;
        ok &= (p1 - 1.8).abs() <= 0.10 && within(p2, -0.42, -0.22) && within(v, 0.22, 0.31);
        parts.push(format!("{m:?} median psi ({p1:.3}, {p2:.3}) value {v:.3}"));
    }
    report.line(
        "3",
        status(ok),
        format!(
            "sim2 +25 {} (want psi1 1.80 ± 0.10, psi2 [-0.42, -0.22], value [0.22, 0.31])",
            parts.join("; ")
        ),
        started,
    );
}

fn criterion_4(report: &mut Report) {
    let started = Instant::now();
    let cfg = OracleConfig {
        draws: 10_000_000,
        ..OracleConfig::default()
    };
    let closed = sim1_value(0.9);
    let mc1 = monte_carlo_value(ScenarioId::Sim1, &[0.9], &cfg).expect("sim1 oracle");
    let mc2 = monte_carlo_value(ScenarioId::Sim2, &[1.8, -0.3], &cfg).expect("sim2 oracle");
    let ok1 = (closed - 0.165).abs() <= 0.001 && (mc1.value - 0.165).abs() <= 0.001;
    let z2 = (mc2.value - 0.241) / mc2.std_error;
    let ok2 = z2.abs() <= 3.0;
    report.line(
        "4",
        status(ok1 && ok2),
        format!(
            "sim1 V(0.9) closed form {closed:.4}, MC {:.4} ± {:.4} (want 0.165 ± 0.001); \
             sim2 V(1.8, -0.3) MC {:.4} ± {:.4}, z = {z2:.1} against 0.241 (want |z| <= 3)",
            mc1.value, mc1.std_error, mc2.value, mc2.std_error
        ),
        started,
    );
}

/// Fifty BO runs on simulated cohorts, alternating HM and HE, auditing the
/// re-interpolated fit after every infill.
fn reinterpolation_fuzz() -> Result<String, String> {
    let id = ScenarioId::Sim1;
    let family = id.family();
    let (mut audits, mut worst_gap, mut worst_ratio) = (0, 0.0_f64, 0.0_f64);
    for run in 0..50 {
        let spec = ScenarioSpec::new(id, 500, child_seed(MASTER_SEED ^ 0x5eed, run));
        let cohort = generate_cohort(&spec).map_err(|e| e.to_string())?;
        let prop = fit_propensity(&cohort, &PropensitySpec::stage_history(&cohort)).map_err(|e| e.to_string())?;
        let est = IpwEstimator::new(&cohort, &family, &prop);
        let eval = |p: &[f64]| est.value(p);
        let (design, _) = evaluate_design(&family.bounds, &id.initial_design(), eval).map_err(|e| e.to_string())?;
        let gp = if run % 2 == 0 { GpType::HM } else { GpType::HE };
        let mut cfg = BoConfig::new(gp, 25);
        cfg.audit_reinterpolation = true;
        let trace = run_bo(eval, design, &cfg).map_err(|e| e.to_string())?;
        for a in &trace.audits {
            worst_gap = worst_gap.max(a.max_mean_gap);
            worst_ratio = worst_ratio.max(a.max_sample_variance / a.jitter);
            audits += 1;
        }
    }
    let detail = format!("{audits} fits, mean gap {worst_gap:.1e}, variance/jitter {worst_ratio:.2}");
    if audits > 0 && worst_gap <= 1e-6 && worst_ratio <= 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn interpolation_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let m = rng.gen_range(2..25);
        let pts: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let ys: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let d = Design::from_points(Bounds::unit(2), &pts, &ys).map_err(|e| e.to_string())?;
        let theta = rng.gen_range(0.05..1.5);
        let k = KernelSpec::new(KernelFamily::Matern52, vec![theta, theta], rng.gen_range(0.1..10.0))
            .map_err(|e| e.to_string())?;
        let fit = GpFit::condition(&d, k, NoiseSpec::Interpolating, None).map_err(|e| e.to_string())?;
        let post = fit.posterior_f(&pts).map_err(|e| e.to_string())?;
        for (mu, y) in post.mean.iter().zip(&ys) {
            worst = worst.max((mu - y).abs());
        }
    }
    let detail = format!("max |mean - y| {worst:.1e} over 200 designs");
    if worst < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ei_checks() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    for _ in 0..100_000 {
        let mu: f64 = rng.gen_range(-1e3..1e3);
        let base: f64 = rng.gen_range(-1e3..1e3);
        let var = 10f64.powf(rng.gen_range(-20.0..6.0));
        let ei = expected_improvement(mu, var, base);
        if !(ei >= 0.0 && ei.is_finite()) {
            return Err(format!("EI({mu}, {var}, {base}) = {ei}"));
        }
        if expected_improvement(mu, 0.0, base) != 0.0 {
            return Err(format!("EI({mu}, 0, {base}) nonzero"));
        }
    }
    Ok("1e5 inputs".into())
}

fn dirichlet_checks() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let (n, draws) = (20, 20_000);
    let mut first = Vec::with_capacity(draws);
    for _ in 0..draws {
        let w = bayesian_bootstrap_weights(n, &mut rng);
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 || w.iter().any(|&x| x < 0.0) {
            return Err("weights off the simplex".into());
        }
        first.push(w[0]);
    }
    let mean = first.iter().sum::<f64>() / draws as f64;
    // Var of a flat Dirichlet component is (n − 1) / (n² (n + 1)).
    let se = ((n - 1) as f64 / (n * n * (n + 1)) as f64 / draws as f64).sqrt();
    let z = (mean - 1.0 / n as f64) / se;
    let detail = format!("E[w1] {mean:.5} vs {:.5} (z = {z:.2})", 1.0 / n as f64);
    if z.abs() <= 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ipw_hand_example() -> Result<String, String> {
    let t = |x: f64, a: bool, y: f64| Trajectory::single(vec![x], a, y).map_err(|e| e.to_string());
    let cohort = Cohort::new(vec![t(0.5, true, 2.0)?, t(-0.5, false, 1.0)?, t(0.7, false, 5.0)?])
        .map_err(|e| e.to_string())?;
    let p = FixedPropensities {
        probs: vec![vec![0.8], vec![0.4], vec![0.5]],
    };
    let family = RegimeFamily::threshold_per_stage(Bounds::new(vec![-1.5], vec![1.5]).map_err(|e| e.to_string())?);
    let v = ipw_value(&cohort, &family, &[0.0], &p).map_err(|e| e.to_string())?;
    // Patient 1 follows with weight 1/0.8, patient 2 with 1/0.6, patient 3 does not.
    let (wa, wb) = (1.0 / 0.8, 1.0 / 0.6);
    let want = (wa * 2.0 + wb * 1.0) / (wa + wb);
    let detail = format!("|error| {:.1e}", (v - want).abs());
    if (v - want).abs() <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Pure noise with sd 0.1 + 0.4ψ, residuals taken against a constant-mean
/// fit.
fn hetero_recovery() -> Result<String, String> {
    let (m, repeats) = (200, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let xs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let gamma: Vec<f64> = xs.iter().map(|x| 0.1 + 0.4 * x).collect();
    let opts = FitOptions::default();
    let mut total = 0.0;
    for _ in 0..repeats {
        let ys: Vec<f64> = gamma.iter().map(|&g| Normal::new(0.0, g).unwrap().sample(&mut rng)).collect();
        let d = Design::from_points(Bounds::unit(1), &pts, &ys).map_err(|e| e.to_string())?;
        let var = ys.iter().map(|y| y * y).sum::<f64>() / m as f64;
        let k = KernelSpec::new(KernelFamily::Matern52, vec![10.0], 1e-4 * var).map_err(|e| e.to_string())?;
        let mean = GpFit::condition(&d, k, NoiseSpec::Homoskedastic { variance: var }, None).map_err(|e| e.to_string())?;
        let est = estimate_pointwise_noise(&d, &mean, 1, &opts).map_err(|e| e.to_string())?;
        let ms = est.std_devs.iter().zip(&gamma).map(|(e, g)| ((e - g) / g).powi(2)).sum::<f64>() / m as f64;
        total += ms.sqrt();
    }
    let rms = total / repeats as f64;
    let detail = format!("RMS relative error {rms:.3} (want < 0.30)");
    if rms < 0.3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn path_consistency() -> Result<String, String> {
    let xs = [0.05, 0.3, 0.55, 0.9];
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let d = Design::from_points(Bounds::unit(1), &pts, &[0.2, -0.4, 0.1, 0.8]).map_err(|e| e.to_string())?;
    let k = KernelSpec::new(KernelFamily::Matern52, vec![0.3], 1.0).map_err(|e| e.to_string())?;
    let fit = GpFit::condition(&d, k, NoiseSpec::Homoskedastic { variance: 0.05 }, None).map_err(|e| e.to_string())?;
    let grid: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
    let post = fit.posterior_f_full(&grid).map_err(|e| e.to_string())?;
    let cov = post.covariance.ok_or("no covariance")?;
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let paths = sample_posterior_paths(&fit, &grid, n, &mut rng).map_err(|e| e.to_string())?;
    let g = grid.len();
    let mean: Vec<f64> = (0..g).map(|j| (0..n).map(|r| paths[(r, j)]).sum::<f64>() / n as f64).collect();
    let zmax = (0..g)
        .map(|j| ((mean[j] - post.mean[j]) / (post.variance[j] / n as f64).sqrt()).abs())
        .fold(0.0, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..g {
        for b in 0..g {
            let c = (0..n).map(|r| (paths[(r, a)] - mean[a]) * (paths[(r, b)] - mean[b])).sum::<f64>() / (n - 1) as f64;
            num += (c - cov[(a, b)]).powi(2);
            den += cov[(a, b)].powi(2);
        }
    }
    let frob = (num / den).sqrt();
    // Twelve means, so allow a Bonferroni-sized z.
    let detail = format!("max mean z {zmax:.2}, relative covariance error {frob:.3}");
    if zmax <= 3.5 && frob < 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5(report: &mut Report) {
    let started = Instant::now();
    let checks: [(&str, fn() -> Result<String, String>); 7] = [
        ("re-interpolation", reinterpolation_fuzz),
        ("interpolation", interpolation_exactness),
        ("EI", ei_checks),
        ("Dirichlet", dirichlet_checks),
        ("IPW hand example", ipw_hand_example),
        ("noise recovery", hetero_recovery),
        ("posterior paths", path_consistency),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, check) in checks {
        match check() {
            Ok(d) => parts.push(format!("{name} ok ({d})")),
            Err(d) => {
                ok = false;
                parts.push(format!("{name} FAILED ({d})"));
            }
        }
    }
    report.line("5", status(ok), parts.join("; "), started);
}

fn criterion_6(report: &mut Report) {
    let started = Instant::now();
    let Some(path) = std::env::var_os("DTRGP_ACTG175_CSV") else {
        report.line("6", Status::Skip, "set DTRGP_ACTG175_CSV to the trial CSV to run".into(), started);
        return;
    };
    let schema = CsvSchema::default();
    let data = match load_cohort_csv(Path::new(&path), &schema) {
        Ok(d) => d,
        Err(e) => {
            report.line("6", Status::Fail, format!("cannot load {}: {e}", Path::new(&path).display()), started);
            return;
        }
    };
    let family = dtrgp::case_study::default_family();
    let spec = schema.propensity_spec();
    let n_ok = data.cohort.len() == 1046;
    let g = grid_bootstrap(&data.cohort, &family, &spec, &[15.0, 35.0], 500, MASTER_SEED, None).expect("grid bootstrap");
    let grid_ok = (g.grid.cd4.median - 305.0).abs() <= 35.0
        && (g.grid.weight.median - 95.0).abs() <= 5.0
        && (g.grid.value.median - 408.0).abs() <= 5.0;
    let cfg = UncertaintyConfig::new(MASTER_SEED);
    let u = optimizer_uncertainty(&data.cohort, &family, &spec, &cfg).expect("optimizer uncertainty");
    let hm = u.summaries.iter().find(|s| s.added == 25).expect("+25 summary");
    let hm_ok = (hm.cd4.median - 290.0).abs() <= 35.0
        && (hm.weight.median - 98.0).abs() <= 5.0
        && (hm.value.median - 408.2).abs() <= 5.0;
    report.line(
        "6",
        status(n_ok && grid_ok && hm_ok),
        format!(
            "n = {} (want 1046); grid medians cd4 {:.1} weight {:.1} value {:.1} (want 305 ± 35, 95 ± 5, 408 ± 5); \
             HM +25 medians cd4 {:.1} weight {:.1} value {:.1} (want 290 ± 35, 98 ± 5, 408.2 ± 5)",
            data.cohort.len(),
            g.grid.cd4.median,
            g.grid.weight.median,
            g.grid.value.median,
            hm.cd4.median,
            hm.weight.median,
            hm.value.median
        ),
        started,
    );
}

fn main() {
    // `cargo test -- --list` and filters come through here too.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut report = Report { failed: false };
    criteria_1_and_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    let strict = std::env::var("DTRGP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if report.failed && strict {
        std::process::exit(1);
    }
}
