//! Bayesian optimization of noisy, point-wise-evaluable value surfaces with
//! Gaussian-process surrogates, applied to dynamic treatment regime value
//! search.

// `!(x > 0)` is how NaN-rejecting checks are written here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bo;
pub mod case_study;
pub mod domain;
pub mod dtr;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod scalar;
pub mod scenarios;

pub use scalar::Scalar;

/// Double-precision instances of the generic surrogate stack.
pub type Bounds64 = domain::Bounds<f64>;
pub type Design64 = gp::Design<f64>;
pub type GpFit64 = gp::GpFit<f64>;
pub type KernelSpec64 = gp::KernelSpec<f64>;
pub type BoConfig64 = bo::BoConfig<f64>;
pub type BoTrace64 = bo::BoTrace<f64>;
