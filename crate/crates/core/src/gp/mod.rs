//! Gaussian-process surrogate machinery.
//!
//! All fitting happens on the unit hypercube: design points are mapped
//! affinely through the design's [`Bounds`](crate::domain::Bounds) and
//! length scales are expressed in those unit coordinates. Queries are taken
//! in the original index coordinates.

mod design;
mod fit;
mod hetero;
mod kernel;
mod paths;
mod workspace;

pub use design::{Design, PointTag, DUPLICATE_DISTANCE};
pub use fit::{
    fit_hyperparams, log_marginal_likelihood, FitOptions, GpFit, HeteroNoise, HyperPrior,
    Hyperparameters, LogNormalPrior, NoiseModel, NoiseQuery, NoiseSpec, PosteriorMoments,
    QueryNoise, StartRecord,
};
pub use hetero::{
    estimate_pointwise_noise, fit_hetero_gp, HeteroOptions, NoiseEstimate, ABS_RESIDUAL_SCALE,
};
pub use kernel::{KernelFamily, KernelSpec};
pub use paths::sample_posterior_paths;

use thiserror::Error;

use crate::linalg::{Cholesky, LinalgError, Matrix};
use crate::scalar::Scalar;

/// First jitter tried, relative to the signal variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried, relative to the signal variance.
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("design point {0:?} duplicates an existing point")]
    DuplicatePoint(Vec<f64>),
    #[error(transparent)]
    Numerical(#[from] LinalgError),
    #[error("hyperparameter fit failed: {diagnostic}")]
    FitFailed {
        diagnostic: String,
        /// Best parameters seen, as (log length scales.., log signal variance, [log noise variance]).
        best: Option<Vec<f64>>,
    },
}

/// Factorizes `K + diag(noise) + jitter I` under the escalating jitter
/// policy.
pub(crate) fn factor_covariance<T: Scalar>(
    kernel: &KernelSpec<T>,
    unit_points: &Matrix<T>,
    noise_diag: &[T],
    what: &str,
) -> Result<Cholesky<T>, GpError> {
    let mut k = kernel.covariance(unit_points);
    k.add_diagonal(noise_diag);
    let s = kernel.signal_variance;
    Ok(Cholesky::factor_with_jitter(
        &k,
        s * T::lit(JITTER_START),
        s * T::lit(JITTER_MAX),
        what,
    )?)
}
