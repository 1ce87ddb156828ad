use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use dtrgp::bo::GpType;
use dtrgp::case_study::Pooling;
use dtrgp::gp::KernelFamily;
use dtrgp::harness::{Method, PropensityMode};
use dtrgp::scenarios::{NoiseVariant, ScenarioId};
use serde::{Serialize, Serializer};

/// Comma-separated list flag, e.g. `--methods grid,hm`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn display_opt<T: fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "dtrgp",
    version,
    about = "Gaussian-process Bayesian optimization for dynamic treatment regimes",
    args_override_self = true,
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte-Carlo replicate experiments on a simulated scenario.
    Simulate(SimulateArgs),
    /// Grid-search baseline on one simulated cohort.
    Grid(GridArgs),
    /// A single Bayesian-optimization run with its full trace.
    Bo(BoArgs),
    /// Optimizer uncertainty on a two-arm trial CSV.
    CaseStudy(CaseStudyArgs),
    /// True value of a regime in a simulated scenario.
    Oracle(OracleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Grid(_) => "grid",
            Command::Bo(_) => "bo",
            Command::CaseStudy(_) => "case-study",
            Command::Oracle(_) => "oracle",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Grid(a) => &a.common,
            Command::Bo(a) => &a.common,
            Command::CaseStudy(a) => &a.common,
            Command::Oracle(a) => &a.common,
        }
    }

    /// Resolved flags as a flat map keyed by long flag name.
    pub fn resolved(&self) -> serde_json::Value {
        let v = match self {
            Command::Simulate(a) => serde_json::to_value(a),
            Command::Grid(a) => serde_json::to_value(a),
            Command::Bo(a) => serde_json::to_value(a),
            Command::CaseStudy(a) => serde_json::to_value(a),
            Command::Oracle(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Common {
    /// Flat `key = value` file mirroring the flag names; command-line flags win.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "DTRGP_OUT_DIR", default_value = "dtrgp-out")]
    pub out_dir: PathBuf,
    /// Worker threads for replicate and bootstrap parallelism [default: all cores].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Log progress to stderr.
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CohortArgs {
    /// Scenario: sim1 or sim2.
    #[arg(long)]
    #[serde(serialize_with = "display")]
    pub scenario: ScenarioId,
    /// Patients per cohort.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Outcome noise: standard, homoskedastic, hetero-by-arm or hetero-by-region.
    #[arg(long, default_value = "standard")]
    #[serde(serialize_with = "display")]
    pub noise: NoiseVariant,
    /// Treatment probabilities in the estimator: estimated or known.
    #[arg(long, default_value = "estimated")]
    #[serde(serialize_with = "display")]
    pub propensity: PropensityMode,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cohort: CohortArgs,
    /// Number of replicates.
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Methods: any of grid, msm, int, hm, he.
    #[arg(long, default_value = "hm")]
    #[serde(serialize_with = "display")]
    pub methods: List<Method>,
    /// Infill budget for the GP methods.
    #[arg(long, default_value_t = 25)]
    pub budget: usize,
    /// Reported infill counts.
    #[arg(long, default_value = "1,5,10,15,20,25")]
    #[serde(serialize_with = "display")]
    pub checkpoints: List<usize>,
    /// Kernel: matern52 or matern32.
    #[arg(long, default_value = "matern52")]
    #[serde(serialize_with = "display")]
    pub kernel: KernelFamily,
    /// Log-normal length-scale prior (MAP) instead of empirical Bayes.
    #[arg(long)]
    pub prior: bool,
    /// Largest tolerated fraction of failed replicate runs.
    #[arg(long, default_value_t = 0.1)]
    pub failure_budget: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cohort: CohortArgs,
    /// Grid step per dimension [default: the scenario's search grid].
    #[arg(long)]
    #[serde(serialize_with = "display_opt", skip_serializing_if = "Option::is_none")]
    pub step: Option<List<f64>>,
    /// Also fit the quadratic marginal structural model on the surface.
    #[arg(long)]
    pub msm: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BoArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cohort: CohortArgs,
    /// Surrogate: int, hm or he.
    #[arg(long, default_value = "hm")]
    #[serde(serialize_with = "display")]
    pub gp_type: GpType,
    /// Number of infill points.
    #[arg(long, default_value_t = 25)]
    pub budget: usize,
    /// Kernel: matern52 or matern32.
    #[arg(long, default_value = "matern52")]
    #[serde(serialize_with = "display")]
    pub kernel: KernelFamily,
    /// Log-normal length-scale prior (MAP) instead of empirical Bayes.
    #[arg(long)]
    pub prior: bool,
    /// EI candidates per dimension [default: 512 in 1-D, 101 per axis in 2-D].
    #[arg(long)]
    #[serde(serialize_with = "display_opt", skip_serializing_if = "Option::is_none")]
    pub candidates: Option<List<usize>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CaseStudyArgs {
    /// Trial CSV.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, default_value = "pidnum")]
    pub id_col: String,
    #[arg(long, default_value = "arms")]
    pub arm_col: String,
    /// Baseline weight (kg).
    #[arg(long, default_value = "wtkg")]
    pub weight_col: String,
    /// Baseline CD4 (cells/µL).
    #[arg(long, default_value = "cd40")]
    pub cd4_col: String,
    /// Outcome column.
    #[arg(long, default_value = "cd420")]
    pub outcome_col: String,
    /// Extra baseline covariates for the propensity model.
    #[arg(long, default_value = "")]
    #[serde(serialize_with = "display")]
    pub covariates: List<String>,
    /// Arm code of the regime's treatment.
    #[arg(long, default_value = "1")]
    pub treated_arm: String,
    /// Arm code of the comparator.
    #[arg(long, default_value = "2")]
    pub control_arm: String,
    /// Bayesian-bootstrap draws.
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    /// Posterior sample paths per draw and checkpoint.
    #[arg(long, default_value_t = 250)]
    pub paths: usize,
    /// Infill counts at which paths are drawn.
    #[arg(long, default_value = "1,5,10,15,20,25")]
    #[serde(serialize_with = "display")]
    pub checkpoints: List<usize>,
    /// Path grid steps (kg, cells/µL).
    #[arg(long, default_value = "4,7.5")]
    #[serde(serialize_with = "display")]
    pub path_steps: List<f64>,
    /// Surrogate: int, hm or he.
    #[arg(long, default_value = "hm")]
    #[serde(serialize_with = "display")]
    pub gp_type: GpType,
    /// Kernel: matern52 or matern32.
    #[arg(long, default_value = "matern52")]
    #[serde(serialize_with = "display")]
    pub kernel: KernelFamily,
    /// Interval pooling: pooled or per-draw.
    #[arg(long, default_value = "pooled")]
    #[serde(serialize_with = "display")]
    pub pooling: Pooling,
    /// Bootstrap draws for the grid-search and MSM baselines; 0 skips them.
    #[arg(long, default_value_t = 500)]
    pub grid_draws: usize,
    /// Baseline grid steps (kg, cells/µL).
    #[arg(long, default_value = "15,35")]
    #[serde(serialize_with = "display")]
    pub grid_steps: List<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OracleArgs {
    /// Scenario: sim1 or sim2.
    #[arg(long)]
    #[serde(serialize_with = "display")]
    pub scenario: ScenarioId,
    /// Regime index, comma-separated per stage.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(serialize_with = "display")]
    pub psi: List<f64>,
    /// Monte-Carlo draws.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    /// Outcome noise variant.
    #[arg(long, default_value = "standard")]
    #[serde(serialize_with = "display")]
    pub noise: NoiseVariant,
    /// Use the Monte-Carlo oracle even when a closed form exists.
    #[arg(long)]
    pub monte_carlo: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}
