use serde::{Deserialize, Serialize};

use super::{Cohort, DtrError, Trajectory};
use crate::linalg::{dot, Cholesky, Matrix};

/// Probabilities are clamped to `[p_min, 1 − p_min]` before weighting.
pub const DEFAULT_P_MIN: f64 = 0.005;

/// Linear predictors stronger than this at convergence indicate separation.
const MAX_LINEAR_PREDICTOR: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureTerm {
    Intercept,
    Covariate { stage: usize, index: usize },
    Treatment { stage: usize },
    Baseline { index: usize },
}

impl FeatureTerm {
    pub fn value(&self, traj: &Trajectory) -> f64 {
        match *self {
            FeatureTerm::Intercept => 1.0,
            FeatureTerm::Covariate { stage, index } => traj.stage_covariates[stage][index],
            FeatureTerm::Treatment { stage } => f64::from(u8::from(traj.treatments[stage])),
            FeatureTerm::Baseline { index } => traj.baseline[index],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensitySpec {
    /// Features of the logistic model for each stage.
    pub stage_features: Vec<Vec<FeatureTerm>>,
    pub p_min: f64,
    pub max_iter: usize,
    /// Bound on the Euclidean norm of the weighted score at convergence.
    pub tol: f64,
}

impl PropensitySpec {
    pub fn new(stage_features: Vec<Vec<FeatureTerm>>) -> Self {
        Self {
            stage_features,
            p_min: DEFAULT_P_MIN,
            max_iter: 100,
            tol: 1e-9,
        }
    }

    /// Stage `t` uses an intercept, every stage-`t` covariate and the
    /// previous treatment.
    pub fn stage_history(cohort: &Cohort) -> Self {
        let first = &cohort.trajectories()[0];
        let features = (0..cohort.stages())
            .map(|t| {
                let mut f = vec![FeatureTerm::Intercept];
                f.extend((0..first.stage_covariates[t].len()).map(|index| FeatureTerm::Covariate { stage: t, index }));
                if t > 0 {
                    f.push(FeatureTerm::Treatment { stage: t - 1 });
                }
                f
            })
            .collect();
        Self::new(features)
    }

    pub fn intercept_only(stages: usize) -> Self {
        Self::new(vec![vec![FeatureTerm::Intercept]; stages])
    }
}

/// Probability of treatment at a stage for one patient of a cohort.
pub trait PropensitySource {
    fn prob_treated(&self, traj: &Trajectory, patient: usize, stage: usize) -> f64;
}

/// Known per-patient, per-stage treatment probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPropensities {
    pub probs: Vec<Vec<f64>>,
}

impl PropensitySource for FixedPropensities {
    fn prob_treated(&self, _traj: &Trajectory, patient: usize, stage: usize) -> f64 {
        self.probs[patient][stage]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    pub features: Vec<FeatureTerm>,
    pub coefficients: Vec<f64>,
    /// Large-sample standard errors from the inverse information.
    pub standard_errors: Vec<f64>,
    pub iterations: usize,
    pub score_norm: f64,
}

impl StageModel {
    pub fn linear_predictor(&self, traj: &Trajectory) -> f64 {
        self.features
            .iter()
            .zip(&self.coefficients)
            .map(|(f, b)| f.value(traj) * b)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub stages: Vec<StageModel>,
    pub p_min: f64,
}

impl PropensityModel {
    /// Unclamped fitted probability.
    pub fn raw_prob(&self, traj: &Trajectory, stage: usize) -> f64 {
        expit(self.stages[stage].linear_predictor(traj))
    }
}

impl PropensitySource for PropensityModel {
    fn prob_treated(&self, traj: &Trajectory, _patient: usize, stage: usize) -> f64 {
        self.raw_prob(traj, stage).clamp(self.p_min, 1.0 - self.p_min)
    }
}

fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Per-stage weighted logistic regressions by iteratively reweighted least
/// squares (Newton with step halving). The cohort's observation weights are
/// used when present.
pub fn fit_propensity(cohort: &Cohort, spec: &PropensitySpec) -> Result<PropensityModel, DtrError> {
    if spec.stage_features.len() != cohort.stages() {
        return Err(DtrError::InvalidCohort(format!(
            "{} stage feature lists for {} stages",
            spec.stage_features.len(),
            cohort.stages()
        )));
    }
    if !(spec.p_min >= 0.0 && spec.p_min < 0.5) {
        return Err(DtrError::InvalidCohort(format!("p_min {} outside [0, 0.5)", spec.p_min)));
    }
    let w = cohort.effective_weights();
    let stages = spec
        .stage_features
        .iter()
        .enumerate()
        .map(|(t, features)| fit_stage(cohort, &w, t, features, spec))
        .collect::<Result<_, _>>()?;
    Ok(PropensityModel {
        stages,
        p_min: spec.p_min,
    })
}

fn fit_stage(
    cohort: &Cohort,
    w: &[f64],
    stage: usize,
    features: &[FeatureTerm],
    spec: &PropensitySpec,
) -> Result<StageModel, DtrError> {
    let fail = |reason: String| DtrError::PropensityFit { stage, reason };
    let trajs = cohort.trajectories();
    let k = features.len();
    let x: Vec<Vec<f64>> = trajs
        .iter()
        .map(|tr| features.iter().map(|f| f.value(tr)).collect())
        .collect();
    let z: Vec<f64> = trajs.iter().map(|tr| f64::from(u8::from(tr.treatments[stage]))).collect();
    let treated: f64 = w.iter().zip(&z).map(|(wi, zi)| wi * zi).sum();
    let total: f64 = w.iter().sum();
    if treated <= 0.0 || treated >= total {
        return Err(fail("all weighted patients received the same treatment".into()));
    }

    let loglik = |beta: &[f64]| -> f64 {
        x.iter()
            .zip(&z)
            .zip(w)
            .map(|((xi, &zi), &wi)| {
                let eta = dot(xi, beta);
                wi * (zi * eta - softplus(eta))
            })
            .sum()
    };
    let score_and_info = |beta: &[f64]| -> (Vec<f64>, Matrix<f64>) {
        let mut g = vec![0.0; k];
        let mut h = Matrix::zeros(k, k);
        for ((xi, &zi), &wi) in x.iter().zip(&z).zip(w) {
            if wi == 0.0 {
                continue;
            }
            let p = expit(dot(xi, beta));
            let r = wi * (zi - p);
            let v = wi * p * (1.0 - p);
            for a in 0..k {
                g[a] += r * xi[a];
                for b in 0..=a {
                    h[(a, b)] += v * xi[a] * xi[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (g, h)
    };

    let mut beta = vec![0.0; k];
    let mut ll = loglik(&beta);
    for iter in 0..=spec.max_iter {
        let (g, h) = score_and_info(&beta);
        let gnorm = dot(&g, &g).sqrt();
        let chol = Cholesky::factor(&h, "logistic information")?;
        if gnorm < spec.tol {
            let max_eta = x.iter().map(|xi| dot(xi, &beta).abs()).fold(0.0, f64::max);
            if max_eta > MAX_LINEAR_PREDICTOR {
                return Err(fail(format!(
                    "fitted probabilities reach 0 or 1 (|linear predictor| = {max_eta:.1}); the treatment is separated"
                )));
            }
            let n = cohort.len() as f64;
            let standard_errors = (0..k)
                .map(|a| {
                    let mut e = vec![0.0; k];
                    e[a] = 1.0;
                    (chol.solve(&e)[a] / n).sqrt()
                })
                .collect();
            return Ok(StageModel {
                features: features.to_vec(),
                coefficients: beta,
                standard_errors,
                iterations: iter,
                score_norm: gnorm,
            });
        }
        let step = chol.solve(&g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = loglik(&cand);
            // Near the optimum the likelihood change is below rounding, so
            // the line search only guards steps taken far from it.
            if cand_ll >= ll || gnorm < 1e-6 || t < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
    }
    Err(fail(format!(
        "no convergence after {} iterations (possible separation)",
        spec.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cohort_from(xs: &[f64], zs: &[bool]) -> Cohort {
        Cohort::new(
            xs.iter()
                .zip(zs)
                .map(|(&x, &z)| Trajectory::single(vec![x], z, 0.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn intercept_only_matches_treated_fraction() {
        let zs = [true, false, false, false, true, false, false, false];
        let c = cohort_from(&[0.0; 8], &zs);
        let m = fit_propensity(&c, &PropensitySpec::intercept_only(1)).unwrap();
        for (i, tr) in c.trajectories().iter().enumerate() {
            assert!((m.prob_treated(tr, i, 0) - 0.25).abs() < 1e-12);
        }
        assert!(m.stages[0].score_norm < 1e-8);
    }

    #[test]
    fn uniform_weights_reproduce_the_unweighted_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..400).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let zs: Vec<bool> = xs.iter().map(|&x| rng.gen::<f64>() < expit(x)).collect();
        let c = cohort_from(&xs, &zs);
        let spec = PropensitySpec::stage_history(&c);
        let plain = fit_propensity(&c, &spec).unwrap();
        let weighted = fit_propensity(&c.clone().with_weights(vec![1.0 / 400.0; 400]).unwrap(), &spec).unwrap();
        for (a, b) in plain.stages[0].coefficients.iter().zip(&weighted.stages[0].coefficients) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn separation_and_constant_treatment_are_errors() {
        let c = cohort_from(&[-1.0, -0.5, 0.5, 1.0], &[false, false, true, true]);
        let spec = PropensitySpec::stage_history(&c);
        assert!(matches!(fit_propensity(&c, &spec), Err(DtrError::PropensityFit { stage: 0, .. })));
        let c = cohort_from(&[-1.0, 1.0], &[true, true]);
        assert!(matches!(fit_propensity(&c, &spec), Err(DtrError::PropensityFit { stage: 0, .. })));
    }

    #[test]
    fn probabilities_are_clamped() {
        let xs: Vec<f64> = (0..200).map(|i| -10.0 + 0.1 * i as f64).collect();
        let zs: Vec<bool> = xs.iter().enumerate().map(|(i, &x)| if i % 37 == 0 { x < 0.0 } else { x > 0.0 }).collect();
        let c = cohort_from(&xs, &zs);
        let m = fit_propensity(&c, &PropensitySpec::stage_history(&c)).unwrap();
        for (i, tr) in c.trajectories().iter().enumerate() {
            let p = m.prob_treated(tr, i, 0);
            assert!((DEFAULT_P_MIN..=1.0 - DEFAULT_P_MIN).contains(&p));
        }
    }
}
