use rand::Rng;
use rand_distr::Exp1;

use super::{is_adherent, Cohort, DtrError, PropensitySource, RegimeFamily};

/// Normalized IPW estimator with the inverse treatment probabilities
/// precomputed, so that each regime index costs one pass over the cohort.
#[derive(Debug, Clone)]
pub struct IpwEstimator<'a> {
    cohort: &'a Cohort,
    family: &'a RegimeFamily,
    /// `π_i / Π_t p(z_it | history)`.
    base_weights: Vec<f64>,
}

impl<'a> IpwEstimator<'a> {
    pub fn new(cohort: &'a Cohort, family: &'a RegimeFamily, propensity: &dyn PropensitySource) -> Self {
        let pi = cohort.effective_weights();
        let base_weights = cohort
            .trajectories()
            .iter()
            .enumerate()
            .zip(pi)
            .map(|((i, tr), p)| {
                let prob: f64 = tr
                    .treatments
                    .iter()
                    .enumerate()
                    .map(|(t, &z)| {
                        let p1 = propensity.prob_treated(tr, i, t);
                        if z {
                            p1
                        } else {
                            1.0 - p1
                        }
                    })
                    .product();
                p / prob
            })
            .collect();
        Self {
            cohort,
            family,
            base_weights,
        }
    }

    pub fn family(&self) -> &RegimeFamily {
        self.family
    }

    pub fn value(&self, psi: &[f64]) -> Result<f64, DtrError> {
        self.family.check_index(psi)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (tr, &w) in self.cohort.trajectories().iter().zip(&self.base_weights) {
            if w > 0.0 && is_adherent(tr, self.family, psi) {
                num += w * tr.outcome;
                den += w;
            }
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(DtrError::NoAdherentPatients { psi: psi.to_vec() })
        }
    }

    /// Values on a grid; indices without adherent patients are `None`.
    pub fn surface(&self, grid: &[Vec<f64>]) -> Result<Vec<Option<f64>>, DtrError> {
        grid.iter()
            .map(|psi| match self.value(psi) {
                Ok(v) => Ok(Some(v)),
                Err(DtrError::NoAdherentPatients { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// `Σ π_i w_i y_i / Σ π_i w_i` over patients following the regime.
pub fn ipw_value(
    cohort: &Cohort,
    family: &RegimeFamily,
    psi: &[f64],
    propensity: &dyn PropensitySource,
) -> Result<f64, DtrError> {
    IpwEstimator::new(cohort, family, propensity).value(psi)
}

pub fn estimation_surface(
    cohort: &Cohort,
    family: &RegimeFamily,
    grid: &[Vec<f64>],
    propensity: &dyn PropensitySource,
) -> Result<Vec<Option<f64>>, DtrError> {
    IpwEstimator::new(cohort, family, propensity).surface(grid)
}

/// Flat Dirichlet weights via normalized standard exponentials.
pub fn bayesian_bootstrap_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}
