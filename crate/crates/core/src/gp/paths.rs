use rand::Rng;
use rand_distr::StandardNormal;

use super::{GpError, GpFit, JITTER_MAX, JITTER_START};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Draws `n_paths` joint samples of the latent surface over `grid` from the
/// posterior of `fit`. Row `r` of the result is path `r`.
pub fn sample_posterior_paths<T: Scalar, R: Rng + ?Sized>(
    fit: &GpFit<T>,
    grid: &[Vec<T>],
    n_paths: usize,
    rng: &mut R,
) -> Result<Matrix<T>, GpError> {
    let post = fit.posterior_f_full(grid)?;
    let cov = post.covariance.expect("full covariance requested");
    let s = fit.kernel().signal_variance;
    let chol = Cholesky::factor_with_jitter(
        &cov,
        s * T::lit(JITTER_START),
        s * T::lit(JITTER_MAX),
        "posterior path covariance",
    )?;
    let g = grid.len();
    let l = chol.lower();
    let mut out = Matrix::zeros(n_paths, g);
    let mut z = vec![T::zero(); g];
    for r in 0..n_paths {
        for zi in z.iter_mut() {
            let v: f64 = rng.sample(StandardNormal);
            *zi = T::lit(v);
        }
        for i in 0..g {
            out[(r, i)] = post.mean[i] + dot(&l.row(i)[..=i], &z[..=i]);
        }
    }
    Ok(out)
}
