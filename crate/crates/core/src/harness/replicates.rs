use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grid_search, msm_baseline, HarnessError, Method};
use crate::bo::{run_bo, BoConfig, BoTrace};
use crate::domain::Bounds;
use crate::dtr::{fit_propensity, IpwEstimator, PropensitySource, PropensitySpec};
use crate::gp::{Design, GpError, HyperPrior, KernelFamily, PointTag};
use crate::scenarios::{generate_cohort, sim1_value, true_propensities, NoiseVariant, ScenarioId, ScenarioSpec};

/// Infill counts reported in the result tables.
pub const CHECKPOINTS: [usize; 6] = [1, 5, 10, 15, 20, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropensityMode {
    /// Logistic models fitted on the replicate's cohort.
    Estimated,
    /// The generating probabilities.
    Known,
}

impl std::fmt::Display for PropensityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Estimated => "estimated",
            Self::Known => "known",
        })
    }
}

impl std::str::FromStr for PropensityMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "estimated" => Ok(Self::Estimated),
            "known" => Ok(Self::Known),
            other => Err(format!("unknown propensity mode `{other}` (expected estimated or known)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateConfig {
    pub scenario: ScenarioId,
    pub n: usize,
    pub noise: NoiseVariant,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub master_seed: u64,
    pub budget: usize,
    /// Reported infill counts; those above the budget are dropped.
    pub checkpoints: Vec<usize>,
    pub kernel: KernelFamily,
    pub propensity: PropensityMode,
    /// Log-normal length-scale prior (MAP) instead of empirical Bayes.
    pub length_scale_prior: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Largest tolerated fraction of failed (replicate, method) runs.
    pub failure_budget: f64,
}

impl ReplicateConfig {
    pub fn new(scenario: ScenarioId, methods: Vec<Method>, replicates: usize, master_seed: u64) -> Self {
        Self {
            scenario,
            n: 500,
            noise: NoiseVariant::Standard,
            methods,
            replicates,
            master_seed,
            budget: 25,
            checkpoints: CHECKPOINTS.to_vec(),
            kernel: KernelFamily::Matern52,
            propensity: PropensityMode::Estimated,
            length_scale_prior: false,
            workers: None,
            failure_budget: 0.1,
        }
    }

    pub fn bo_config(&self, method: Method) -> Option<BoConfig<f64>> {
        let gp = method.gp_type()?;
        let mut c = BoConfig::new(gp, self.budget);
        c.family = self.kernel;
        if self.length_scale_prior {
            c.fit.prior = Some(HyperPrior::default_length_scale());
        }
        Some(c)
    }

    fn reported_checkpoints(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.checkpoints.iter().copied().filter(|&a| a <= self.budget).collect();
        if c.is_empty() {
            c.push(self.budget);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointResult {
    pub added: usize,
    pub point: Vec<f64>,
    /// Estimated value at `point`: posterior mean for GP methods, the
    /// estimator for grid search, the fitted model for MSM.
    pub value: f64,
    /// Closed-form true value at `point` when available.
    pub true_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub checkpoints: Vec<CheckpointResult>,
    /// Estimator evaluations, failed ones included.
    pub evaluations: usize,
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub method: Option<Method>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRun {
    pub results: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r` (1-based), distinct for distinct `r`.
pub fn child_seed(master: u64, r: usize) -> u64 {
    splitmix64(master ^ splitmix64(r as u64))
}

/// Evaluates the points of an initial design; points where the evaluator
/// fails are left out and returned separately.
pub fn evaluate_design<E: std::fmt::Display>(
    domain: &Bounds<f64>,
    points: &[Vec<f64>],
    mut evaluator: impl FnMut(&[f64]) -> Result<f64, E>,
) -> Result<(Design<f64>, Vec<(Vec<f64>, String)>), GpError> {
    let mut design = Design::new(domain.clone());
    let mut failed = Vec::new();
    for p in points {
        match evaluator(p) {
            Ok(v) if v.is_finite() => design.push(p, v, PointTag::Initial)?,
            Ok(v) => failed.push((p.clone(), format!("non-finite value {v}"))),
            Err(e) => failed.push((p.clone(), e.to_string())),
        }
    }
    Ok((design, failed))
}

fn true_value_at(scenario: ScenarioId, point: &[f64]) -> Option<f64> {
    match scenario {
        ScenarioId::Sim1 => Some(sim1_value(point[0])),
        ScenarioId::Sim2 => None,
    }
}

fn bo_checkpoints(trace: &BoTrace<f64>, wanted: &[usize], scenario: ScenarioId) -> Vec<CheckpointResult> {
    wanted
        .iter()
        .map(|&a| {
            let c = trace.checkpoint_at(a);
            CheckpointResult {
                added: a,
                point: c.incumbent.point.clone(),
                value: c.incumbent.value,
                true_value: true_value_at(scenario, &c.incumbent.point),
            }
        })
        .collect()
}

fn run_replicate(config: &ReplicateConfig, r: usize) -> Vec<Result<ReplicateResult, ReplicateFailure>> {
    let seed = child_seed(config.master_seed, r);
    let fail = |method: Option<Method>, error: String| ReplicateFailure {
        replicate: r,
        seed,
        method,
        error,
    };
    let spec = ScenarioSpec {
        id: config.scenario,
        n: config.n,
        noise: config.noise,
        seed,
    };
    let cohort = match generate_cohort(&spec) {
        Ok(c) => c,
        Err(e) => return vec![Err(fail(None, e.to_string()))],
    };
    let family = config.scenario.family();
    let known;
    let fitted;
    let propensity: &dyn PropensitySource = match config.propensity {
        PropensityMode::Known => {
            known = true_propensities(config.scenario, &cohort);
            &known
        }
        PropensityMode::Estimated => match fit_propensity(&cohort, &PropensitySpec::stage_history(&cohort)) {
            Ok(m) => {
                fitted = m;
                &fitted
            }
            Err(e) => return vec![Err(fail(None, e.to_string()))],
        },
    };
    let estimator = IpwEstimator::new(&cohort, &family, propensity);
    run_methods(config, r, seed, &estimator)
}

fn run_methods(
    config: &ReplicateConfig,
    r: usize,
    seed: u64,
    estimator: &IpwEstimator<'_>,
) -> Vec<Result<ReplicateResult, ReplicateFailure>> {
    let scenario = config.scenario;
    let wanted = config.reported_checkpoints();
    let grid = if config.methods.iter().any(|m| matches!(m, Method::Grid | Method::Msm)) {
        scenario.search_grid()
    } else {
        Vec::new()
    };
    let mut surface: Option<Vec<Option<f64>>> = None;
    let mut out = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let fail = |error: String| ReplicateFailure {
            replicate: r,
            seed,
            method: Some(method),
            error,
        };
        let result = match method {
            Method::Grid | Method::Msm => {
                let surf = match &surface {
                    Some(s) => s,
                    None => match estimator.surface(&grid) {
                        Ok(s) => surface.insert(s),
                        Err(e) => {
                            out.push(Err(fail(e.to_string())));
                            continue;
                        }
                    },
                };
                let missing = surf.iter().filter(|v| v.is_none()).count();
                let found = if method == Method::Grid {
                    let mut k = 0;
                    grid_search(
                        |_| {
                            k += 1;
                            surf[k - 1]
                        },
                        &grid,
                    )
                    .map(|g| (g.point, g.value))
                } else {
                    let (pts, vals): (Vec<Vec<f64>>, Vec<f64>) = grid
                        .iter()
                        .zip(surf)
                        .filter_map(|(p, v)| v.map(|v| (p.clone(), v)))
                        .unzip();
                    msm_baseline(&pts, &vals, &estimator.family().bounds).map(|m| (m.point, m.value))
                };
                found.map_err(|e| fail(e.to_string())).map(|(point, value)| ReplicateResult {
                    replicate: r,
                    seed,
                    method,
                    checkpoints: vec![CheckpointResult {
                        added: 0,
                        true_value: true_value_at(scenario, &point),
                        point,
                        value,
                    }],
                    evaluations: grid.len(),
                    failed_points: missing,
                })
            }
            Method::Int | Method::HM | Method::HE => {
                let cfg = config.bo_config(method).expect("GP method");
                let domain = &estimator.family().bounds;
                let eval = |p: &[f64]| estimator.value(p);
                let run = evaluate_design(domain, &scenario.initial_design(), eval)
                    .map_err(|e| fail(e.to_string()))
                    .and_then(|(design, failed)| {
                        let initial_evals = design.len() + failed.len();
                        run_bo(eval, design, &cfg)
                            .map(|t| (t, initial_evals, failed.len()))
                            .map_err(|e| fail(e.to_string()))
                    });
                run.map(|(trace, initial_evals, initial_failed)| ReplicateResult {
                    replicate: r,
                    seed,
                    method,
                    checkpoints: bo_checkpoints(&trace, &wanted, scenario),
                    evaluations: initial_evals + trace.evaluations,
                    failed_points: initial_failed + trace.failed.len(),
                })
            }
        };
        out.push(result);
    }
    out
}

/// Runs every method on `replicates` independently generated cohorts.
/// Replicate `r` (1-based) uses [`child_seed`]`(master_seed, r)`.
pub fn run_replicates(config: &ReplicateConfig) -> Result<ReplicateRun, HarnessError> {
    if config.replicates == 0 {
        return Err(HarnessError::Invalid("at least one replicate is required".into()));
    }
    if config.methods.is_empty() {
        return Err(HarnessError::Invalid("no methods requested".into()));
    }
    ScenarioSpec {
        id: config.scenario,
        n: config.n,
        noise: config.noise,
        seed: 0,
    }
    .validate()?;
    let work = || -> Vec<Vec<Result<ReplicateResult, ReplicateFailure>>> {
        (1..=config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, r))
            .collect()
    };
    let per_replicate = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for item in per_replicate.into_iter().flatten() {
        match item {
            Ok(r) => results.push(r),
            Err(f) => {
                warn!("replicate {} ({:?}) failed: {}", f.replicate, f.method, f.error);
                failures.push(f)
            }
        }
    }
    let total = config.replicates * config.methods.len();
    info!("{} runs finished, {} failed", results.len(), failures.len());
    if failures.len() as f64 > config.failure_budget * total as f64 {
        return Err(HarnessError::TooManyFailures {
            failed: failures.len(),
            total,
            budget: config.failure_budget * 100.0,
            first: failures[0].error.clone(),
        });
    }
    Ok(ReplicateRun { results, failures })
}
