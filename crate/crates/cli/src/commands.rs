use std::error::Error;
use std::fs;
use std::io::Write;

use dtrgp::bo::{run_bo, BoConfig};
use dtrgp::case_study::{
    default_family, format_table, grid_bootstrap, load_cohort_csv, optimizer_uncertainty, CsvSchema,
    UncertaintyConfig,
};
use dtrgp::dtr::{fit_propensity, Cohort, IpwEstimator, PropensitySource, PropensitySpec};
use dtrgp::gp::HyperPrior;
use dtrgp::harness::{
    evaluate_design, grid_search, msm_baseline, run_replicates, summarize, write_json, write_results_csv,
    write_summary_csv, PropensityMode, ReplicateConfig,
};
use dtrgp::scenarios::{
    generate_cohort, monte_carlo_value, sim1_value, true_propensities, true_value, OracleConfig, ScenarioId,
    ScenarioSpec,
};
use log::info;
use serde_json::json;

use crate::args::{BoArgs, CaseStudyArgs, CohortArgs, Command, GridArgs, OracleArgs, SimulateArgs};
use crate::config::{resolved_toml, Outputs, RunRecord};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

struct Finished {
    summary: serde_json::Value,
    failures: Vec<String>,
}

pub fn run(command: &Command) -> Result<()> {
    let common = command.common();
    let mut out = Outputs::create(&common.out_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", common.out_dir.display()))?;
    let done = match command {
        Command::Simulate(a) => simulate(a, &mut out)?,
        Command::Grid(a) => grid(a, &mut out)?,
        Command::Bo(a) => bo(a, &mut out)?,
        Command::CaseStudy(a) => case_study(a, &mut out)?,
        Command::Oracle(a) => oracle(a, &mut out)?,
    };
    let resolved = command.resolved();
    fs::write(out.file("run_config.toml"), resolved_toml(&resolved))?;
    let record_path = out.file("run_record.json");
    let record = RunRecord {
        program: "dtrgp",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        master_seed: common.seed,
        config: resolved,
        outputs: out.files.clone(),
        summary: done.summary,
        failures: &done.failures,
    };
    write_json(&record_path, &record)?;
    eprintln!("wrote {} files to {}", out.files.len(), out.dir.display());
    Ok(())
}

fn cohort(a: &CohortArgs, seed: u64) -> Result<Cohort> {
    let spec = ScenarioSpec {
        id: a.scenario,
        n: a.n,
        noise: a.noise,
        seed,
    };
    Ok(generate_cohort(&spec)?)
}

fn propensity(a: &CohortArgs, cohort: &Cohort) -> Result<Box<dyn PropensitySource>> {
    Ok(match a.propensity {
        PropensityMode::Known => Box::new(true_propensities(a.scenario, cohort)),
        PropensityMode::Estimated => Box::new(fit_propensity(cohort, &PropensitySpec::stage_history(cohort))?),
    })
}

fn closed_form_value(id: ScenarioId, psi: &[f64]) -> Option<f64> {
    (id == ScenarioId::Sim1).then(|| sim1_value(psi[0]))
}

fn simulate(a: &SimulateArgs, out: &mut Outputs) -> Result<Finished> {
    let mut cfg = ReplicateConfig::new(a.cohort.scenario, a.methods.0.clone(), a.replicates, a.common.seed);
    cfg.n = a.cohort.n;
    cfg.noise = a.cohort.noise;
    cfg.propensity = a.cohort.propensity;
    cfg.budget = a.budget;
    cfg.checkpoints = a.checkpoints.0.clone();
    cfg.kernel = a.kernel;
    cfg.length_scale_prior = a.prior;
    cfg.workers = a.common.workers;
    cfg.failure_budget = a.failure_budget;
    info!("running {} replicates of {}", cfg.replicates, cfg.scenario);
    let run = run_replicates(&cfg)?;
    let rows = summarize(&run.results);
    write_results_csv(&out.file("results.csv"), &run.results)?;
    write_summary_csv(&out.file("summary.csv"), &rows)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "method\tadded\tquantity\tmedian (IQR)\tmean (SD)")?;
    for r in &rows {
        let s = &r.stats;
        writeln!(
            stdout,
            "{}\t+{}\t{}\t{:.3} ({:.3})\t{:.3} ({:.3})",
            r.method, r.added, r.quantity, s.median, s.iqr, s.mean, s.sd
        )?;
    }
    let failures: Vec<String> = run
        .failures
        .iter()
        .map(|f| format!("replicate {} ({:?}): {}", f.replicate, f.method, f.error))
        .collect();
    Ok(Finished {
        summary: serde_json::to_value(&rows)?,
        failures,
    })
}

fn grid(a: &GridArgs, out: &mut Outputs) -> Result<Finished> {
    let id = a.cohort.scenario;
    let cohort = cohort(&a.cohort, a.common.seed)?;
    let prop = propensity(&a.cohort, &cohort)?;
    let family = id.family();
    let est = IpwEstimator::new(&cohort, &family, prop.as_ref());
    let points = match &a.step {
        Some(s) => family.bounds.stepped_grid(&s.0, true)?,
        None => id.search_grid(),
    };
    let surface = est.surface(&points)?;
    let mut w = csv::Writer::from_path(out.file("surface.csv"))?;
    let mut header: Vec<String> = (1..=family.dim()).map(|d| format!("psi{d}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for (p, v) in points.iter().zip(&surface) {
        let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        row.push(v.map_or(String::new(), |v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut k = 0;
    let best = grid_search(
        |_| {
            k += 1;
            surface[k - 1]
        },
        &points,
    )?;
    println!(
        "grid argmax {:?} value {:.4} ({} points, {} missing)",
        best.point, best.value, best.evaluations, best.missing
    );
    let truth = closed_form_value(id, &best.point);
    if let Some(t) = truth {
        println!("true value at argmax {t:.4}");
    }
    let msm = if a.msm {
        let (p, v): (Vec<Vec<f64>>, Vec<f64>) = points
            .iter()
            .zip(&surface)
            .filter_map(|(p, v)| v.map(|v| (p.clone(), v)))
            .unzip();
        let m = msm_baseline(&p, &v, &family.bounds)?;
        println!("msm argmax {:?} value {:.4}", m.point, m.value);
        Some(m)
    } else {
        None
    };
    let summary = json!({ "grid": best, "true_value": truth, "msm": msm });
    write_json(&out.file("grid_result.json"), &summary)?;
    Ok(Finished {
        summary,
        failures: Vec::new(),
    })
}

fn bo(a: &BoArgs, out: &mut Outputs) -> Result<Finished> {
    let id = a.cohort.scenario;
    let cohort = cohort(&a.cohort, a.common.seed)?;
    let prop = propensity(&a.cohort, &cohort)?;
    let family = id.family();
    let est = IpwEstimator::new(&cohort, &family, prop.as_ref());
    let eval = |p: &[f64]| est.value(p);
    let (design, initial_failed) = evaluate_design(&family.bounds, &id.initial_design(), eval)?;
    let mut cfg = BoConfig::new(a.gp_type, a.budget);
    cfg.family = a.kernel;
    if a.prior {
        cfg.fit.prior = Some(HyperPrior::default_length_scale());
    }
    if let Some(c) = &a.candidates {
        cfg.candidates = c.0.clone();
    }
    let trace = run_bo(eval, design, &cfg)?;

    let dim = family.dim();
    let psi_cols = |prefix: &'static str| (1..=dim).map(move |d| format!("{prefix}psi{d}"));
    let mut w = csv::Writer::from_path(out.file("trace.csv"))?;
    let mut header = vec!["iteration".to_string(), "tag".into()];
    header.extend(psi_cols(""));
    header.extend(["value".into(), "max_ei".into()]);
    header.extend(psi_cols("incumbent_"));
    header.push("incumbent_value".into());
    w.write_record(&header)?;
    for e in &trace.entries {
        let mut row = vec![e.iteration.to_string(), format!("{:?}", e.tag).to_lowercase()];
        row.extend(e.point.iter().map(|x| x.to_string()));
        row.push(e.value.to_string());
        row.push(e.max_ei.map_or(String::new(), |v| v.to_string()));
        match &e.incumbent {
            Some(i) => {
                row.extend(i.point.iter().map(|x| x.to_string()));
                row.push(i.value.to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), dim + 1)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.file("checkpoints.csv"))?;
    let mut header = vec!["added".to_string(), "design_size".into()];
    header.extend(psi_cols(""));
    header.extend(["value".into(), "true_value".into()]);
    w.write_record(&header)?;
    for c in &trace.checkpoints {
        let mut row = vec![c.added.to_string(), c.design_size.to_string()];
        row.extend(c.incumbent.point.iter().map(|x| x.to_string()));
        row.push(c.incumbent.value.to_string());
        row.push(closed_form_value(id, &c.incumbent.point).map_or(String::new(), |v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(&out.file("trace.json"), &trace)?;

    let fin = &trace.final_incumbent;
    println!(
        "{} after +{}: argmax {:?} posterior mean {:.4} ({} evaluations)",
        a.gp_type,
        trace.accepted_infills(),
        fin.point,
        fin.value,
        initial_failed.len() + trace.entries.len() + trace.failed.len()
    );
    let truth = closed_form_value(id, &fin.point);
    if let Some(t) = truth {
        println!("true value at argmax {t:.4}");
    }
    let failures = initial_failed
        .iter()
        .map(|(p, e)| format!("initial point {p:?}: {e}"))
        .chain(trace.failed.iter().map(|f| format!("iteration {} at {:?}: {}", f.iteration, f.point, f.reason)))
        .collect();
    Ok(Finished {
        summary: json!({
            "final_incumbent": fin,
            "true_value": truth,
            "accepted_infills": trace.accepted_infills(),
            "stop": trace.stop,
        }),
        failures,
    })
}

fn case_study(a: &CaseStudyArgs, out: &mut Outputs) -> Result<Finished> {
    let schema = CsvSchema {
        id: a.id_col.clone(),
        arm: a.arm_col.clone(),
        weight: a.weight_col.clone(),
        cd4: a.cd4_col.clone(),
        outcome: a.outcome_col.clone(),
        extra_covariates: a.covariates.0.clone(),
        treated_arm: a.treated_arm.clone(),
        control_arm: a.control_arm.clone(),
    };
    let data = load_cohort_csv(&a.data, &schema)?;
    println!(
        "cohort: {} patients ({} treated arm {}, {} control arm {}, {} rows in other arms)",
        data.cohort.len(),
        data.treated,
        schema.treated_arm,
        data.control,
        schema.control_arm,
        data.skipped
    );
    let family = default_family();
    let spec = schema.propensity_spec();
    let mut cfg = UncertaintyConfig::new(a.common.seed);
    cfg.draws = a.draws;
    cfg.paths = a.paths;
    cfg.path_steps = a.path_steps.0.clone();
    cfg.checkpoints = a.checkpoints.0.clone();
    cfg.gp_type = a.gp_type;
    cfg.kernel = a.kernel;
    cfg.pooling = a.pooling;
    cfg.workers = a.common.workers;
    let report = optimizer_uncertainty(&data.cohort, &family, &spec, &cfg)?;
    let table = format_table(&report.summaries);
    print!("{table}");
    fs::write(out.file("uncertainty_table.tsv"), &table)?;
    write_json(&out.file("uncertainty.json"), &report)?;
    let mut failures: Vec<String> = report
        .failures
        .iter()
        .map(|f| format!("draw {}: {}", f.draw, f.error))
        .collect();

    let grid = if a.grid_draws > 0 {
        let g = grid_bootstrap(
            &data.cohort,
            &family,
            &spec,
            &a.grid_steps.0,
            a.grid_draws,
            a.common.seed,
            a.common.workers,
        )?;
        println!(
            "grid ({} points): weight {}  cd4 {}  value {}",
            g.grid_size, g.grid.weight, g.grid.cd4, g.grid.value
        );
        println!("msm: weight {}  cd4 {}  value {}", g.msm.weight, g.msm.cd4, g.msm.value);
        write_json(&out.file("grid_bootstrap.json"), &g)?;
        failures.extend(g.failures.iter().map(|f| format!("grid draw {}: {}", f.draw, f.error)));
        Some(json!({ "steps": g.steps, "grid_size": g.grid_size, "grid": g.grid, "msm": g.msm }))
    } else {
        None
    };
    Ok(Finished {
        summary: json!({
            "cohort_size": data.cohort.len(),
            "treated": data.treated,
            "control": data.control,
            "checkpoints": report.summaries,
            "grid_bootstrap": grid,
        }),
        failures,
    })
}

fn oracle(a: &OracleArgs, out: &mut Outputs) -> Result<Finished> {
    let cfg = OracleConfig {
        draws: a.draws,
        seed: a.common.seed,
        noise: a.noise,
    };
    let psi = &a.psi.0;
    let v = if a.monte_carlo {
        monte_carlo_value(a.scenario, psi, &cfg)?
    } else {
        true_value(a.scenario, psi, &cfg)?
    };
    if v.std_error > 0.0 {
        println!("{} at {:?}: {:.5} (Monte-Carlo SE {:.5}, {} draws)", a.scenario, psi, v.value, v.std_error, a.draws);
    } else {
        println!("{} at {:?}: {:.6} (closed form)", a.scenario, psi, v.value);
    }
    let summary = json!({ "scenario": a.scenario.to_string(), "psi": psi, "value": v.value, "std_error": v.std_error });
    write_json(&out.file("oracle.json"), &summary)?;
    Ok(Finished {
        summary,
        failures: Vec::new(),
    })
}
