//! Sequential design: Expected Improvement on a (re-)interpolating surrogate,
//! candidate-grid proposals and the budgeted run loop.

mod ei;
mod propose;
mod run;

pub use ei::expected_improvement;
pub use propose::{ei_baseline, propose_next, Proposal};
pub use run::{
    fit_surrogate, incumbent, run_bo, BoTrace, Checkpoint, FailedPoint, Incumbent, ReinterpolationAudit,
    StopReason, TraceEntry,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Bounds, DomainError};
use crate::gp::{FitOptions, GpError, GpFit, KernelFamily, DUPLICATE_DISTANCE};
use crate::optim::halton_points;
use crate::scalar::Scalar;

/// Largest candidate grid allowed.
pub const MAX_CANDIDATES: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GpType {
    /// Interpolating.
    Int,
    /// Homoskedastic regression.
    HM,
    /// Heteroskedastic regression.
    HE,
}

impl GpType {
    pub const ALL: [GpType; 3] = [GpType::Int, GpType::HM, GpType::HE];

    pub fn is_regressive(self) -> bool {
        !matches!(self, GpType::Int)
    }
}

impl fmt::Display for GpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GpType::Int => "Int",
            GpType::HM => "HM",
            GpType::HE => "HE",
        })
    }
}

impl FromStr for GpType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "int" | "interpolating" => Ok(GpType::Int),
            "hm" | "homoskedastic" => Ok(GpType::HM),
            "he" | "heteroskedastic" => Ok(GpType::HE),
            other => Err(format!("unknown GP type `{other}` (expected int, hm or he)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EiBaseline {
    /// Largest observed response.
    ObservedMax,
    /// Largest fitted value at the design points.
    ReinterpolatedMax,
}

impl FromStr for EiBaseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "observedmax" | "observed" => Ok(EiBaseline::ObservedMax),
            "reinterpolatedmax" | "reinterpolated" => Ok(EiBaseline::ReinterpolatedMax),
            other => Err(format!("unknown EI baseline `{other}`")),
        }
    }
}

/// Stop once the maximal EI stays below `epsilon` for `patience`
/// consecutive iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EiPlateau<T> {
    pub epsilon: T,
    pub patience: usize,
}

#[derive(Debug, Clone)]
pub struct BoConfig<T> {
    pub gp_type: GpType,
    pub family: KernelFamily,
    /// Number of infill iterations.
    pub budget: usize,
    /// Candidates per dimension; empty selects [`default_candidate_counts`].
    pub candidates: Vec<usize>,
    /// Grid for the incumbent (posterior-mean argmax); empty reuses the
    /// candidate grid.
    pub eval_grid: Vec<usize>,
    /// Relative to each dimension's range.
    pub duplicate_distance: T,
    /// `None` selects ObservedMax for Int and ReinterpolatedMax otherwise.
    pub baseline: Option<EiBaseline>,
    pub plateau: Option<EiPlateau<T>>,
    /// Local simplex polish of the best grid candidate.
    pub refine: bool,
    pub fit: FitOptions<T>,
    pub hetero_max_iter: usize,
    pub hetero_tol: T,
    /// Seed each fit with the previous iteration's hyperparameters.
    pub warm_start: bool,
    /// Keep the surrogate fitted after this many accepted infills.
    pub keep_fits_at: Vec<usize>,
    /// Record re-interpolation diagnostics for every regressive fit.
    pub audit_reinterpolation: bool,
}

impl<T: Scalar> BoConfig<T> {
    pub fn new(gp_type: GpType, budget: usize) -> Self {
        Self {
            gp_type,
            family: KernelFamily::Matern52,
            budget,
            candidates: Vec::new(),
            eval_grid: Vec::new(),
            duplicate_distance: T::lit(DUPLICATE_DISTANCE),
            baseline: None,
            plateau: None,
            refine: true,
            fit: FitOptions::default(),
            hetero_max_iter: 3,
            hetero_tol: T::lit(1e-3),
            warm_start: true,
            keep_fits_at: Vec::new(),
            audit_reinterpolation: false,
        }
    }

    pub fn baseline_mode(&self) -> EiBaseline {
        self.baseline.unwrap_or(match self.gp_type {
            GpType::Int => EiBaseline::ObservedMax,
            _ => EiBaseline::ReinterpolatedMax,
        })
    }

    pub fn candidate_counts(&self, dim: usize) -> Vec<usize> {
        if self.candidates.is_empty() {
            default_candidate_counts(dim)
        } else {
            self.candidates.clone()
        }
    }

    pub fn eval_counts(&self, dim: usize) -> Vec<usize> {
        if self.eval_grid.is_empty() {
            self.candidate_counts(dim)
        } else {
            self.eval_grid.clone()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), BoError> {
        if !(self.duplicate_distance > T::zero()) {
            return Err(BoError::InvalidConfig("duplicate distance must be positive".into()));
        }
        for (what, counts) in [("candidate", self.candidate_counts(dim)), ("evaluation", self.eval_counts(dim))] {
            if counts.len() != dim {
                return Err(BoError::InvalidConfig(format!(
                    "{what} grid has {} dimensions, domain has {dim}",
                    counts.len()
                )));
            }
            if counts.iter().any(|&c| c < 2) {
                return Err(BoError::InvalidConfig(format!("{what} grid needs at least 2 points per dimension")));
            }
            let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
            if total.is_none_or(|t| t > MAX_CANDIDATES) {
                return Err(BoError::InvalidConfig(format!(
                    "{what} grid exceeds {MAX_CANDIDATES} points"
                )));
            }
        }
        if let Some(p) = &self.plateau {
            if !(p.epsilon >= T::zero()) || p.patience == 0 {
                return Err(BoError::InvalidConfig(
                    "plateau stop needs epsilon >= 0 and patience >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// 512 candidates in one dimension, 101 per axis in two, otherwise the
/// largest per-axis count within [`MAX_CANDIDATES`].
pub fn default_candidate_counts(dim: usize) -> Vec<usize> {
    match dim {
        1 => vec![512],
        2 => vec![101, 101],
        d => {
            let mut c = (MAX_CANDIDATES as f64).powf(1.0 / d as f64).floor() as usize;
            while c.pow(d as u32) > MAX_CANDIDATES {
                c -= 1;
            }
            vec![c.max(2); d]
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("all {candidates} candidates lie within the exclusion distance of sampled points")]
    Saturated { candidates: usize },
}

/// Interpolating surrogate through the fitted values of a regressive fit,
/// keeping its kernel hyperparameters. Identity for interpolating fits.
pub fn reinterpolate<T: Scalar>(fit: &GpFit<T>) -> Result<GpFit<T>, GpError> {
    fit.reinterpolated()
}

/// Largest mean discrepancy between two fits over `n` quasi-random test
/// points, and the largest latent variance of `interp` at its design points.
pub fn reinterpolation_gaps<T: Scalar>(regressive: &GpFit<T>, interp: &GpFit<T>, n: usize) -> (T, T) {
    let domain: &Bounds<T> = regressive.domain();
    let mean_gap = halton_points(n, domain.dim())
        .into_iter()
        .map(|u| {
            let u: Vec<T> = u.into_iter().map(T::lit).collect();
            (regressive.predict_mean_unit(&u) - interp.predict_mean_unit(&u)).abs()
        })
        .fold(T::zero(), T::max);
    let sample_var = interp
        .unit_points()
        .rows_iter()
        .map(|u| interp.predict_unit(u).1)
        .fold(T::zero(), T::max);
    (mean_gap, sample_var)
}
