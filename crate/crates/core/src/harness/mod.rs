//! Baselines, Monte-Carlo replicate orchestration and summary tables.

mod baselines;
mod output;
mod replicates;
mod summary;

pub use baselines::{grid_search, msm_baseline, quadratic_feature_names, quadratic_features, GridResult, MsmFit};
pub use output::{write_json, write_results_csv, write_summary_csv};
pub use replicates::{
    child_seed, evaluate_design, run_replicates, CheckpointResult, PropensityMode, ReplicateConfig, ReplicateFailure,
    ReplicateResult, ReplicateRun, CHECKPOINTS,
};
pub use summary::{describe, quantile, summarize, SummaryRow, SummaryStats};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bo::{BoError, GpType};
use crate::dtr::DtrError;
use crate::scenarios::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Grid,
    Msm,
    Int,
    HM,
    HE,
}

impl Method {
    pub fn gp_type(self) -> Option<GpType> {
        match self {
            Method::Int => Some(GpType::Int),
            Method::HM => Some(GpType::HM),
            Method::HE => Some(GpType::HE),
            Method::Grid | Method::Msm => None,
        }
    }
}

impl From<GpType> for Method {
    fn from(g: GpType) -> Self {
        match g {
            GpType::Int => Method::Int,
            GpType::HM => Method::HM,
            GpType::HE => Method::HE,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Grid => "grid",
            Method::Msm => "msm",
            Method::Int => "int",
            Method::HM => "hm",
            Method::HE => "he",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(Method::Grid),
            "msm" => Ok(Method::Msm),
            other => other
                .parse::<GpType>()
                .map(Method::from)
                .map_err(|_| format!("unknown method `{other}`; valid: grid, msm, int, hm, he")),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Invalid(String),
    #[error("quadratic MSM fit failed: {0}")]
    Msm(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dtr(#[from] DtrError),
    #[error(transparent)]
    Bo(#[from] BoError),
    #[error("{failed} of {total} replicate runs failed (budget {budget:.0}%); first error: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        budget: f64,
        first: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
