//! Two-arm trial pipeline: CSV ingestion, the joint weight/CD4 threshold
//! regime, and optimizer uncertainty combining Bayesian-bootstrap draws with
//! GP posterior sample paths.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bo::{run_bo, BoConfig, BoError, GpType};
use crate::domain::{Bounds, DomainError};
use crate::dtr::{
    bayesian_bootstrap_weights, fit_propensity, Cohort, DtrError, FeatureTerm, IpwEstimator, PropensitySpec,
    RegimeFamily, Trajectory,
};
use crate::gp::{sample_posterior_paths, GpError, GpFit, KernelFamily};
use crate::harness::{child_seed, evaluate_design, grid_search, msm_baseline, quantile, HarnessError, CHECKPOINTS};

#[derive(Debug, Error)]
pub enum CaseStudyError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("CSV schema error: column `{0}` not found in the header")]
    MissingColumn(String),
    #[error("line {line}: cannot parse `{value}` in column `{column}` as a number")]
    BadValue { line: u64, column: String, value: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dtr(#[from] DtrError),
    #[error(transparent)]
    Bo(#[from] BoError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{failed} of {total} bootstrap draws failed; first error: {first}")]
    AllDrawsFailed { failed: usize, total: usize, first: String },
}

/// Column names and arm codes of the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub id: String,
    pub arm: String,
    /// Baseline weight, kg.
    pub weight: String,
    /// Baseline CD4, cells/µL.
    pub cd4: String,
    /// Outcome: week-20 CD4, cells/µL.
    pub outcome: String,
    /// Further propensity-model covariates.
    pub extra_covariates: Vec<String>,
    /// Arm code mapped to `z = 1`.
    pub treated_arm: String,
    /// Arm code mapped to `z = 0`.
    pub control_arm: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "pidnum".into(),
            arm: "arms".into(),
            weight: "wtkg".into(),
            cd4: "cd40".into(),
            outcome: "cd420".into(),
            extra_covariates: Vec::new(),
            treated_arm: "1".into(),
            control_arm: "2".into(),
        }
    }
}

impl CsvSchema {
    pub fn validate(&self) -> Result<(), CaseStudyError> {
        if arm_matches(&self.treated_arm, &self.control_arm) {
            return Err(CaseStudyError::Invalid(format!(
                "treated and control arm codes must differ, both are `{}`",
                self.treated_arm
            )));
        }
        Ok(())
    }

    /// Intercept, weight, CD4 and any extra covariates.
    pub fn propensity_spec(&self) -> PropensitySpec {
        let mut f = vec![
            FeatureTerm::Intercept,
            FeatureTerm::Covariate { stage: 0, index: 0 },
            FeatureTerm::Covariate { stage: 0, index: 1 },
        ];
        f.extend((0..self.extra_covariates.len()).map(|index| FeatureTerm::Baseline { index }));
        PropensitySpec::new(vec![f])
    }
}

fn arm_matches(code: &str, wanted: &str) -> bool {
    let (a, b) = (code.trim(), wanted.trim());
    a == b || matches!((a.parse::<f64>(), b.parse::<f64>()), (Ok(x), Ok(y)) if x == y)
}

/// Parsed trial data. Covariates are `[weight, cd4]` at the single stage;
/// extra covariates are stored as baseline covariates so the regime ignores
/// them.
#[derive(Debug, Clone, Serialize)]
pub struct TrialData {
    pub cohort: Cohort,
    pub ids: Vec<String>,
    pub treated: usize,
    pub control: usize,
    /// Rows of other arms.
    pub skipped: usize,
}

pub fn load_cohort_csv(path: &Path, schema: &CsvSchema) -> Result<TrialData, CaseStudyError> {
    let file = std::fs::File::open(path).map_err(|e| CaseStudyError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_cohort(file, schema).map_err(|e| match e {
        CaseStudyError::Io { message, .. } => CaseStudyError::Io {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn read_cohort<R: Read>(input: R, schema: &CsvSchema) -> Result<TrialData, CaseStudyError> {
    schema.validate()?;
    let io = |e: csv::Error| CaseStudyError::Io {
        path: "<input>".into(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(io)?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CaseStudyError::MissingColumn(name.to_string()))
    };
    let id = column(&schema.id)?;
    let arm = column(&schema.arm)?;
    let numeric: Vec<(usize, &str)> = [&schema.weight, &schema.cd4, &schema.outcome]
        .into_iter()
        .chain(&schema.extra_covariates)
        .map(|name| column(name).map(|i| (i, name.as_str())))
        .collect::<Result<_, _>>()?;

    let mut trajectories = Vec::new();
    let mut ids = Vec::new();
    let (mut treated, mut control, mut skipped) = (0, 0, 0);
    for record in reader.records() {
        let record = record.map_err(io)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let code = field(arm);
        let z = if arm_matches(code, &schema.treated_arm) {
            true
        } else if arm_matches(code, &schema.control_arm) {
            false
        } else {
            skipped += 1;
            continue;
        };
        let values: Vec<f64> = numeric
            .iter()
            .map(|&(i, name)| {
                let raw = field(i);
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CaseStudyError::BadValue {
                        line,
                        column: name.to_string(),
                        value: raw.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        let traj = Trajectory::new(vec![values[..2].to_vec()], vec![z], values[2], values[3..].to_vec())
            .map_err(|e| CaseStudyError::Row {
                line,
                message: e.to_string(),
            })?;
        trajectories.push(traj);
        ids.push(field(id).to_string());
        if z {
            treated += 1;
        } else {
            control += 1;
        }
    }
    if trajectories.is_empty() {
        return Err(CaseStudyError::Invalid(format!(
            "no rows with arm `{}` or `{}`",
            schema.treated_arm, schema.control_arm
        )));
    }
    Ok(TrialData {
        cohort: Cohort::new(trajectories)?,
        ids,
        treated,
        control,
        skipped,
    })
}

/// `ψ_W ∈ [50, 100]` kg, `ψ_CD4 ∈ [200, 600]` cells/µL.
pub fn default_bounds() -> Bounds<f64> {
    Bounds::new(vec![50.0, 200.0], vec![100.0, 600.0]).expect("valid bounds")
}

/// Treat with the second therapy iff weight > `ψ_W` and CD4 > `ψ_CD4`.
pub fn default_family() -> RegimeFamily {
    RegimeFamily::joint_threshold(default_bounds())
}

/// 15 kg by 125 cells/µL from the lower corner: 16 points.
pub const INITIAL_STEPS: [f64; 2] = [15.0, 125.0];
pub const PATH_STEPS: [f64; 2] = [4.0, 7.5];
pub const COARSE_STEPS: [f64; 2] = [15.0, 35.0];
pub const FINE_STEPS: [f64; 2] = [10.0, 20.0];

pub fn initial_design_points(bounds: &Bounds<f64>) -> Result<Vec<Vec<f64>>, CaseStudyError> {
    Ok(bounds.stepped_grid(&INITIAL_STEPS, true)?)
}

/// How draws are combined into intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pooling {
    /// Quantiles over all `B × N` path maximizers.
    Pooled,
    /// Quantiles over the `B` per-draw medians.
    PerDraw,
}

impl FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "pooled" => Ok(Self::Pooled),
            "perdraw" => Ok(Self::PerDraw),
            other => Err(format!("unknown pooling `{other}` (expected pooled or per-draw)")),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pooled => "pooled",
            Self::PerDraw => "per-draw",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    /// Bayesian-bootstrap draws `B`; `B = 1` disables resampling.
    pub draws: usize,
    /// Posterior paths per draw `N`.
    pub paths: usize,
    pub path_steps: Vec<f64>,
    pub checkpoints: Vec<usize>,
    pub gp_type: GpType,
    pub kernel: KernelFamily,
    pub master_seed: u64,
    pub pooling: Pooling,
    pub workers: Option<usize>,
}

impl UncertaintyConfig {
    pub fn new(master_seed: u64) -> Self {
        Self {
            draws: 500,
            paths: 250,
            path_steps: PATH_STEPS.to_vec(),
            checkpoints: CHECKPOINTS.to_vec(),
            gp_type: GpType::HM,
            kernel: KernelFamily::Matern52,
            master_seed,
            pooling: Pooling::Pooled,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<(), CaseStudyError> {
        if self.draws == 0 || self.paths == 0 {
            return Err(CaseStudyError::Invalid("draws and paths must be at least 1".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(CaseStudyError::Invalid("at least one checkpoint is required".into()));
        }
        Ok(())
    }

    fn budget(&self) -> usize {
        self.checkpoints.iter().copied().max().unwrap_or(0)
    }
}

/// Argmax and maximum of one sample path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMax {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Maximizers of `n` f-posterior paths of `fit` over `grid`; ties go to the
/// earliest grid point.
pub fn path_maxima<R: rand::Rng + ?Sized>(
    fit: &GpFit<f64>,
    grid: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<Vec<PathMax>, GpError> {
    let paths = sample_posterior_paths(fit, grid, n, rng)?;
    Ok(paths
        .rows_iter()
        .map(|row| {
            let (i, &v) = row
                .iter()
                .enumerate()
                .fold((0, &row[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
            PathMax {
                point: grid[i].clone(),
                value: v,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawCheckpoint {
    pub added: usize,
    /// Posterior-mean maximizer of the surrogate.
    pub incumbent: Vec<f64>,
    pub incumbent_value: f64,
    /// Per-draw medians of the path maximizers and maxima.
    pub path_median: Vec<f64>,
    pub path_value_median: f64,
    #[serde(skip)]
    pub maxima: Vec<PathMax>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawRecord {
    pub draw: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub checkpoints: Vec<DrawCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawFailure {
    pub draw: usize,
    pub seed: u64,
    pub error: String,
}

/// Median and central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            median: quantile(&s, 0.5),
            lower: quantile(&s, 0.025),
            upper: quantile(&s, 0.975),
        })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(1);
        write!(f, "{:.p$} ({:.p$}–{:.p$})", self.median, self.lower, self.upper)
    }
}

/// Intervals for `ψ_W`, `ψ_CD4` and the value at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub added: usize,
    pub weight: Interval,
    pub cd4: Interval,
    pub value: Interval,
    pub draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyReport {
    pub config: UncertaintyConfig,
    pub cohort_size: usize,
    pub summaries: Vec<CheckpointSummary>,
    pub draws: Vec<DrawRecord>,
    pub failures: Vec<DrawFailure>,
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Cohort for bootstrap draw `draw` of `total`: flat Dirichlet weights, or
/// the cohort itself when resampling is disabled.
fn draw_cohort(cohort: &Cohort, total: usize, rng: &mut ChaCha8Rng) -> Result<Cohort, DtrError> {
    if total == 1 {
        return Ok(cohort.without_weights());
    }
    cohort
        .without_weights()
        .with_weights(bayesian_bootstrap_weights(cohort.len(), rng))
}

fn run_draw(
    cohort: &Cohort,
    family: &RegimeFamily,
    spec: &PropensitySpec,
    config: &UncertaintyConfig,
    path_grid: &[Vec<f64>],
    draw: usize,
    seed: u64,
) -> Result<DrawRecord, CaseStudyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weighted = draw_cohort(cohort, config.draws, &mut rng)?;
    let propensity = fit_propensity(&weighted, spec)?;
    let estimator = IpwEstimator::new(&weighted, family, &propensity);
    let eval = |p: &[f64]| estimator.value(p);
    let (design, failed) = evaluate_design(&family.bounds, &initial_design_points(&family.bounds)?, eval)?;
    let budget = config.budget();
    let mut bo = BoConfig::new(config.gp_type, budget);
    bo.family = config.kernel;
    bo.keep_fits_at = (0..=budget).collect();
    let initial_evals = design.len() + failed.len();
    let trace = run_bo(eval, design, &bo)?;

    let mut checkpoints = Vec::with_capacity(config.checkpoints.len());
    for &added in &config.checkpoints {
        let fit = trace
            .fits
            .iter()
            .rev()
            .find(|(a, _)| *a <= added)
            .map(|(_, f)| f)
            .ok_or_else(|| CaseStudyError::Invalid(format!("no surrogate at checkpoint +{added}")))?;
        let inc = trace.checkpoint_at(added);
        let maxima = path_maxima(fit, path_grid, config.paths, &mut rng)?;
        checkpoints.push(DrawCheckpoint {
            added,
            incumbent: inc.incumbent.point.clone(),
            incumbent_value: inc.incumbent.value,
            path_median: (0..family.dim())
                .map(|d| median(maxima.iter().map(|m| m.point[d])))
                .collect(),
            path_value_median: median(maxima.iter().map(|m| m.value)),
            maxima,
        });
    }
    Ok(DrawRecord {
        draw,
        seed,
        evaluations: initial_evals + trace.evaluations,
        checkpoints,
    })
}

fn summarize_draws(draws: &[DrawRecord], checkpoints: &[usize], pooling: Pooling) -> Vec<CheckpointSummary> {
    checkpoints
        .iter()
        .enumerate()
        .filter_map(|(k, &added)| {
            let per: Vec<&DrawCheckpoint> = draws.iter().map(|d| &d.checkpoints[k]).collect();
            let (w, c, v): (Vec<f64>, Vec<f64>, Vec<f64>) = match pooling {
                Pooling::Pooled => per
                    .iter()
                    .flat_map(|d| &d.maxima)
                    .map(|m| (m.point[0], m.point[1], m.value))
                    .fold((Vec::new(), Vec::new(), Vec::new()), push3),
                Pooling::PerDraw => per
                    .iter()
                    .map(|d| (d.path_median[0], d.path_median[1], d.path_value_median))
                    .fold((Vec::new(), Vec::new(), Vec::new()), push3),
            };
            Some(CheckpointSummary {
                added,
                weight: Interval::from_values(&w)?,
                cd4: Interval::from_values(&c)?,
                value: Interval::from_values(&v)?,
                draws: per.len(),
            })
        })
        .collect()
}

fn push3(mut acc: (Vec<f64>, Vec<f64>, Vec<f64>), x: (f64, f64, f64)) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    acc.0.push(x.0);
    acc.1.push(x.1);
    acc.2.push(x.2);
    acc
}

fn in_pool<R: Send>(workers: Option<usize>, work: impl FnOnce() -> R + Send) -> Result<R, CaseStudyError> {
    match workers {
        Some(w) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| CaseStudyError::Invalid(e.to_string()))?
            .install(work)),
        None => Ok(work()),
    }
}

/// For each bootstrap draw: reweight, refit propensities, run BO from the
/// 16-point design, and at each checkpoint draw `N` f-posterior paths on the
/// path grid. Draw `b` (1-based) uses [`child_seed`]`(master_seed, b)`.
pub fn optimizer_uncertainty(
    cohort: &Cohort,
    family: &RegimeFamily,
    spec: &PropensitySpec,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport, CaseStudyError> {
    config.validate()?;
    if family.dim() != 2 {
        return Err(CaseStudyError::Invalid(format!(
            "the case study needs a two-dimensional regime index, found {}",
            family.dim()
        )));
    }
    let path_grid = family.bounds.stepped_grid(&config.path_steps, true)?;
    let outcomes = in_pool(config.workers, || {
        (1..=config.draws)
            .into_par_iter()
            .map(|b| {
                let seed = child_seed(config.master_seed, b);
                run_draw(cohort, family, spec, config, &path_grid, b, seed).map_err(|e| DrawFailure {
                    draw: b,
                    seed,
                    error: e.to_string(),
                })
            })
            .collect::<Vec<_>>()
    })?;
    let mut draws = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(d) => draws.push(d),
            Err(f) => {
                warn!("bootstrap draw {} failed: {}", f.draw, f.error);
                failures.push(f);
            }
        }
    }
    if draws.is_empty() {
        return Err(CaseStudyError::AllDrawsFailed {
            failed: failures.len(),
            total: config.draws,
            first: failures.first().map_or_else(String::new, |f| f.error.clone()),
        });
    }
    info!("{} bootstrap draws finished, {} failed", draws.len(), failures.len());
    Ok(UncertaintyReport {
        config: config.clone(),
        cohort_size: cohort.len(),
        summaries: summarize_draws(&draws, &config.checkpoints, config.pooling),
        draws,
        failures,
    })
}

/// Table with rows `ψ_W`, `ψ_CD4`, value and one column per checkpoint,
/// entries "median (2.5%–97.5%)".
pub fn format_table(summaries: &[CheckpointSummary]) -> String {
    let mut out = String::from("quantity");
    for s in summaries {
        out.push_str(&format!("\t+{}", s.added));
    }
    out.push('\n');
    let rows: [(&str, fn(&CheckpointSummary) -> Interval); 3] =
        [("psi_w", |s| s.weight), ("psi_cd4", |s| s.cd4), ("value", |s| s.value)];
    for (name, get) in rows {
        out.push_str(name);
        for s in summaries {
            out.push_str(&format!("\t{:.1}", get(s)));
        }
        out.push('\n');
    }
    out
}

/// Grid-search and quadratic-MSM optima on one bootstrap draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDraw {
    pub draw: usize,
    pub seed: u64,
    pub grid_point: Vec<f64>,
    pub grid_value: f64,
    pub msm_point: Vec<f64>,
    pub msm_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub weight: Interval,
    pub cd4: Interval,
    pub value: Interval,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridBootstrapReport {
    pub steps: Vec<f64>,
    pub grid_size: usize,
    pub grid: GridSummary,
    pub msm: GridSummary,
    pub draws: Vec<GridDraw>,
    pub failures: Vec<DrawFailure>,
}

fn grid_summary(points: Vec<(&[f64], f64)>) -> Option<GridSummary> {
    let w: Vec<f64> = points.iter().map(|p| p.0[0]).collect();
    let c: Vec<f64> = points.iter().map(|p| p.0[1]).collect();
    let v: Vec<f64> = points.iter().map(|p| p.1).collect();
    Some(GridSummary {
        weight: Interval::from_values(&w)?,
        cd4: Interval::from_values(&c)?,
        value: Interval::from_values(&v)?,
    })
}

/// Bayesian-bootstrap distribution of the grid-search and MSM optima over
/// the grid with the given steps (upper bounds included).
pub fn grid_bootstrap(
    cohort: &Cohort,
    family: &RegimeFamily,
    spec: &PropensitySpec,
    steps: &[f64],
    draws: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<GridBootstrapReport, CaseStudyError> {
    if draws == 0 {
        return Err(CaseStudyError::Invalid("draws must be at least 1".into()));
    }
    let grid = family.bounds.stepped_grid(steps, true)?;
    let one = |b: usize, seed: u64| -> Result<GridDraw, CaseStudyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weighted = draw_cohort(cohort, draws, &mut rng)?;
        let propensity = fit_propensity(&weighted, spec)?;
        let surface = IpwEstimator::new(&weighted, family, &propensity).surface(&grid)?;
        let mut k = 0;
        let g = grid_search(
            |_| {
                k += 1;
                surface[k - 1]
            },
            &grid,
        )?;
        let (pts, vals): (Vec<Vec<f64>>, Vec<f64>) = grid
            .iter()
            .zip(&surface)
            .filter_map(|(p, v)| v.map(|v| (p.clone(), v)))
            .unzip();
        let m = msm_baseline(&pts, &vals, &family.bounds)?;
        Ok(GridDraw {
            draw: b,
            seed,
            grid_point: g.point,
            grid_value: g.value,
            msm_point: m.point,
            msm_value: m.value,
        })
    };
    let outcomes = in_pool(workers, || {
        (1..=draws)
            .into_par_iter()
            .map(|b| {
                let seed = child_seed(master_seed, b);
                one(b, seed).map_err(|e| DrawFailure {
                    draw: b,
                    seed,
                    error: e.to_string(),
                })
            })
            .collect::<Vec<_>>()
    })?;
    let (ok, failures): (Vec<_>, Vec<_>) = outcomes.into_iter().partition(Result::is_ok);
    let draws_ok: Vec<GridDraw> = ok.into_iter().map(Result::unwrap).collect();
    let failures: Vec<DrawFailure> = failures.into_iter().map(|f| f.unwrap_err()).collect();
    let failed = || CaseStudyError::AllDrawsFailed {
        failed: failures.len(),
        total: draws,
        first: failures.first().map_or_else(String::new, |f| f.error.clone()),
    };
    let grid_s = grid_summary(draws_ok.iter().map(|d| (d.grid_point.as_slice(), d.grid_value)).collect())
        .ok_or_else(failed)?;
    let msm_s = grid_summary(draws_ok.iter().map(|d| (d.msm_point.as_slice(), d.msm_value)).collect())
        .ok_or_else(failed)?;
    Ok(GridBootstrapReport {
        steps: steps.to_vec(),
        grid_size: grid.len(),
        grid: grid_s,
        msm: msm_s,
        draws: draws_ok,
        failures,
    })
}
