//! Patient trajectories, regime families, propensity models and the
//! normalized IPW value estimator.

mod ipw;
mod propensity;
mod regime;

pub use ipw::{bayesian_bootstrap_weights, estimation_surface, ipw_value, IpwEstimator};
pub use propensity::{
    fit_propensity, FeatureTerm, FixedPropensities, PropensityModel, PropensitySource, PropensitySpec, StageModel,
    DEFAULT_P_MIN,
};
pub use regime::{is_adherent, RegimeFamily, RegimeKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DtrError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid cohort: {0}")]
    InvalidCohort(String),
    #[error("regime index has {found} coordinates, family expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("no patient follows the regime at {psi:?}")]
    NoAdherentPatients { psi: Vec<f64> },
    #[error("stage {stage}: {reason}")]
    PropensityFit { stage: usize, reason: String },
    #[error(transparent)]
    Numerical(#[from] LinalgError),
}

/// One patient's record: per-stage covariates and treatments, the final
/// outcome, and stage-independent baseline covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub stage_covariates: Vec<Vec<f64>>,
    pub treatments: Vec<bool>,
    pub outcome: f64,
    pub baseline: Vec<f64>,
}

impl Trajectory {
    pub fn new(
        stage_covariates: Vec<Vec<f64>>,
        treatments: Vec<bool>,
        outcome: f64,
        baseline: Vec<f64>,
    ) -> Result<Self, DtrError> {
        if stage_covariates.is_empty() {
            return Err(DtrError::InvalidTrajectory("at least one stage is required".into()));
        }
        if stage_covariates.len() != treatments.len() {
            return Err(DtrError::InvalidTrajectory(format!(
                "{} covariate stages but {} treatments",
                stage_covariates.len(),
                treatments.len()
            )));
        }
        let finite = stage_covariates.iter().flatten().chain(&baseline).all(|x| x.is_finite());
        if !finite || !outcome.is_finite() {
            return Err(DtrError::InvalidTrajectory("values must be finite".into()));
        }
        Ok(Self {
            stage_covariates,
            treatments,
            outcome,
            baseline,
        })
    }

    /// Single-stage record.
    pub fn single(covariates: Vec<f64>, treated: bool, outcome: f64) -> Result<Self, DtrError> {
        Self::new(vec![covariates], vec![treated], outcome, Vec::new())
    }

    pub fn stages(&self) -> usize {
        self.treatments.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    trajectories: Vec<Trajectory>,
    weights: Option<Vec<f64>>,
}

impl Cohort {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self, DtrError> {
        let Some(first) = trajectories.first() else {
            return Err(DtrError::InvalidCohort("cohort is empty".into()));
        };
        let t = first.stages();
        if let Some(i) = trajectories.iter().position(|tr| tr.stages() != t) {
            return Err(DtrError::InvalidCohort(format!(
                "trajectory {i} has {} stages, expected {t}",
                trajectories[i].stages()
            )));
        }
        Ok(Self {
            trajectories,
            weights: None,
        })
    }

    /// Attaches observation weights, which must be nonnegative and sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, DtrError> {
        if weights.len() != self.len() {
            return Err(DtrError::InvalidCohort(format!(
                "{} weights for {} patients",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(DtrError::InvalidCohort("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() >= 1e-12 {
            return Err(DtrError::InvalidCohort(format!("weights sum to {total}, not 1")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn without_weights(&self) -> Self {
        Self {
            trajectories: self.trajectories.clone(),
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn stages(&self) -> usize {
        self.trajectories[0].stages()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Observation weights, uniform when none are attached.
    pub fn effective_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }
}
