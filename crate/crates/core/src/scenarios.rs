//! Simulated data-generating mechanisms and their true value functions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Bounds;
use crate::dtr::{Cohort, DtrError, FixedPropensities, RegimeFamily, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dtr(#[from] DtrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    /// One stage, `x ~ U(−1.5, 1.5)`, cubic treatment effect.
    Sim1,
    /// Two stages with quintic treatment effects.
    Sim2,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 2] = [ScenarioId::Sim1, ScenarioId::Sim2];

    pub fn stages(self) -> usize {
        match self {
            ScenarioId::Sim1 => 1,
            ScenarioId::Sim2 => 2,
        }
    }

    pub fn bounds(self) -> Bounds<f64> {
        let (lo, hi) = match self {
            ScenarioId::Sim1 => (-1.5, 1.5),
            ScenarioId::Sim2 => (-2.25, 1.8),
        };
        let d = self.stages();
        Bounds::new(vec![lo; d], vec![hi; d]).expect("scenario bounds are valid")
    }

    pub fn family(self) -> RegimeFamily {
        RegimeFamily::threshold_per_stage(self.bounds())
    }

    /// Initial BO design: 0.25 steps for Sim1 (13 points), four equally
    /// spaced values per axis for Sim2 (16 points).
    pub fn initial_design(self) -> Vec<Vec<f64>> {
        let b = self.bounds();
        match self {
            ScenarioId::Sim1 => b.stepped_grid(&[0.25], true),
            ScenarioId::Sim2 => b.uniform_grid(&[4, 4]),
        }
        .expect("scenario design is valid")
    }

    /// Grid-search baseline: 0.01 steps without the upper end for Sim1
    /// (300 points), 0.05 steps for Sim2.
    pub fn search_grid(self) -> Vec<Vec<f64>> {
        let b = self.bounds();
        match self {
            ScenarioId::Sim1 => b.stepped_grid(&[0.01], false),
            ScenarioId::Sim2 => b.stepped_grid(&[0.05, 0.05], true),
        }
        .expect("scenario grid is valid")
    }

    /// Maximizer and maximal value of the true value function.
    pub fn true_optimum(self) -> (Vec<f64>, f64) {
        match self {
            ScenarioId::Sim1 => (vec![0.9], sim1_value(0.9)),
            ScenarioId::Sim2 => (vec![1.8, -0.3], 0.241),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::Sim1 => "sim1",
            ScenarioId::Sim2 => "sim2",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sim1" => Ok(ScenarioId::Sim1),
            "sim2" => Ok(ScenarioId::Sim2),
            other => Err(format!("unknown scenario `{other}`; valid scenarios: sim1, sim2")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseVariant {
    /// Sim1: sd 0.25 for treated, 0.05 for untreated. Sim2: sd 0.3.
    Standard,
    /// sd 0.25 for everyone.
    Homoskedastic,
    /// sd 0.25 if treated at the last stage, 0.05 otherwise.
    HeteroByArm,
    /// sd `0.05 + 0.2 |x_1| / 1.5`, growing away from zero.
    HeteroByRegion,
}

impl FromStr for NoiseVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "standard" => Ok(NoiseVariant::Standard),
            "homoskedastic" | "homo" => Ok(NoiseVariant::Homoskedastic),
            "heterobyarm" | "arm" => Ok(NoiseVariant::HeteroByArm),
            "heterobyregion" | "region" => Ok(NoiseVariant::HeteroByRegion),
            other => Err(format!(
                "unknown noise variant `{other}`; valid: standard, homoskedastic, hetero-by-arm, hetero-by-region"
            )),
        }
    }
}

impl fmt::Display for NoiseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseVariant::Standard => "standard",
            NoiseVariant::Homoskedastic => "homoskedastic",
            NoiseVariant::HeteroByArm => "hetero-by-arm",
            NoiseVariant::HeteroByRegion => "hetero-by-region",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub noise: NoiseVariant,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n: usize, seed: u64) -> Self {
        Self {
            id,
            n,
            noise: NoiseVariant::Standard,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n < 10 {
            return Err(ScenarioError::Invalid(format!("n must be at least 10, got {}", self.n)));
        }
        Ok(())
    }
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Treatment effect of Sim1.
pub fn sim1_effect(x: f64) -> f64 {
    (x + 0.8) * x * (x - 0.9)
}

/// Closed-form Sim1 value of "treat iff x > ψ":
/// `(F(1.5) − F(ψ)) / 3` with `F` the antiderivative of the effect.
pub fn sim1_value(psi: f64) -> f64 {
    let f = |x: f64| x.powi(4) / 4.0 - 0.1 * x.powi(3) / 3.0 - 0.36 * x * x;
    let p = psi.clamp(-1.5, 1.5);
    (f(1.5) - f(p)) / 3.0
}

fn sim2_p1(x: f64) -> f64 {
    (x + 2.25) * (x + 1.5) * (x + 0.3) * (x - 1.8) * (x - 0.75)
}

fn sim2_p2(x: f64) -> f64 {
    (x + 2.1) * (x + 1.65) * (x + 0.3) * (x - 2.1) * (x - 1.35)
}

/// Noise-free Sim2 outcome.
pub fn sim2_mean_outcome(x1: f64, z1: bool, x2: f64, z2: bool) -> f64 {
    let ind = |b: bool| f64::from(u8::from(b));
    0.2 * x1 - 0.2 * sim2_p1(x1) * (ind(x1 > 1.5) - ind(z1)) - 0.2 * sim2_p2(x2) * (ind(x2 > 0.75) - ind(z2))
}

fn noise_sd(id: ScenarioId, variant: NoiseVariant, x1: f64, treated_last: bool) -> f64 {
    match (variant, id) {
        (NoiseVariant::Standard, ScenarioId::Sim2) => 0.3,
        (NoiseVariant::Standard, ScenarioId::Sim1) | (NoiseVariant::HeteroByArm, _) => {
            if treated_last {
                0.25
            } else {
                0.05
            }
        }
        (NoiseVariant::Homoskedastic, _) => 0.25,
        (NoiseVariant::HeteroByRegion, _) => 0.05 + 0.2 * x1.abs() / 1.5,
    }
}

fn sample_sim1_x<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x = rng.gen_range(-1.5..1.5);
        if x > -1.5 {
            return x;
        }
    }
}

/// Draws one patient; `regime` overrides the treatment mechanism.
fn draw_patient<R: Rng>(id: ScenarioId, noise: NoiseVariant, regime: Option<&[f64]>, rng: &mut R) -> Trajectory {
    let eps: f64 = StandardNormal.sample(rng);
    match id {
        ScenarioId::Sim1 => {
            let x = sample_sim1_x(rng);
            let u: f64 = rng.gen();
            let z = match regime {
                Some(psi) => x > psi[0],
                None => u < expit(2.0 * x),
            };
            let y = sim1_effect(x) * f64::from(u8::from(z)) + noise_sd(id, noise, x, z) * eps;
            Trajectory::new(vec![vec![x]], vec![z], y, Vec::new()).expect("finite draw")
        }
        ScenarioId::Sim2 => {
            let sd = 1.5;
            let n1: f64 = StandardNormal.sample(rng);
            let x1 = sd * n1;
            let u1: f64 = rng.gen();
            let z1 = match regime {
                Some(psi) => x1 > psi[0],
                None => u1 < expit(-x1 / 1.5),
            };
            let n2: f64 = StandardNormal.sample(rng);
            let x2 = 1.5 * f64::from(u8::from(z1)) + sd * n2;
            let u2: f64 = rng.gen();
            let z2 = match regime {
                Some(psi) => x2 > psi[1],
                None => u2 < expit(-x2 / 1.5 + f64::from(u8::from(z1)) / 1.5),
            };
            let y = sim2_mean_outcome(x1, z1, x2, z2) + noise_sd(id, noise, x1, z2) * eps;
            Trajectory::new(vec![vec![x1], vec![x2]], vec![z1, z2], y, Vec::new()).expect("finite draw")
        }
    }
}

/// Observational cohort drawn under the scenario's treatment mechanism.
pub fn generate_cohort(spec: &ScenarioSpec) -> Result<Cohort, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let trajs = (0..spec.n)
        .map(|_| draw_patient(spec.id, spec.noise, None, &mut rng))
        .collect();
    Ok(Cohort::new(trajs)?)
}

/// The generating treatment probabilities of a scenario cohort.
pub fn true_propensities(id: ScenarioId, cohort: &Cohort) -> FixedPropensities {
    let probs = cohort
        .trajectories()
        .iter()
        .map(|t| match id {
            ScenarioId::Sim1 => vec![expit(2.0 * t.stage_covariates[0][0])],
            ScenarioId::Sim2 => {
                let z1 = f64::from(u8::from(t.treatments[0]));
                vec![
                    expit(-t.stage_covariates[0][0] / 1.5),
                    expit(-t.stage_covariates[1][0] / 1.5 + z1 / 1.5),
                ]
            }
        })
        .collect();
    FixedPropensities { probs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueValue {
    pub value: f64,
    /// Monte-Carlo standard error; zero for closed forms.
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub draws: usize,
    pub seed: u64,
    pub noise: NoiseVariant,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            draws: 1_000_000,
            seed: 20_240_901,
            noise: NoiseVariant::Standard,
        }
    }
}

/// Average outcome of `draws` patients whose treatments are set by the
/// regime, with its standard error.
pub fn monte_carlo_value(id: ScenarioId, psi: &[f64], config: &OracleConfig) -> Result<TrueValue, ScenarioError> {
    if psi.len() != id.stages() {
        return Err(ScenarioError::Invalid(format!(
            "{id} takes a {}-dimensional index, got {}",
            id.stages(),
            psi.len()
        )));
    }
    if config.draws < 2 {
        return Err(ScenarioError::Invalid("at least two Monte-Carlo draws are needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..config.draws {
        let y = draw_patient(id, config.noise, Some(psi), &mut rng).outcome;
        let delta = y - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (y - mean);
    }
    let n = config.draws as f64;
    Ok(TrueValue {
        value: mean,
        std_error: (m2 / (n - 1.0) / n).sqrt(),
    })
}

/// True value of the regime at `psi`: closed form for Sim1, Monte Carlo for
/// Sim2.
pub fn true_value(id: ScenarioId, psi: &[f64], config: &OracleConfig) -> Result<TrueValue, ScenarioError> {
    match id {
        ScenarioId::Sim1 => {
            if psi.len() != 1 {
                return Err(ScenarioError::Invalid(format!("sim1 takes a 1-dimensional index, got {}", psi.len())));
            }
            Ok(TrueValue {
                value: sim1_value(psi[0]),
                std_error: 0.0,
            })
        }
        ScenarioId::Sim2 => monte_carlo_value(id, psi, config),
    }
}

/// Normal noise helper for callers building custom scenarios.
pub fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("sd is finite and nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim1_value_shape() {
        assert!((sim1_value(0.9) - 0.165).abs() < 1e-12);
        assert!(sim1_value(1.5).abs() < 1e-15);
        assert!((sim1_value(-1.5) + 0.075).abs() < 1e-12);
        // local maximum near −0.8
        assert!(sim1_value(-0.8) > sim1_value(-0.81) && sim1_value(-0.8) > sim1_value(-0.79));
        assert!(((sim1_value(0.9) - sim1_value(-0.8)) - 0.0136).abs() < 1e-3);
    }

    #[test]
    fn designs_have_documented_sizes() {
        assert_eq!(ScenarioId::Sim1.initial_design().len(), 13);
        assert_eq!(ScenarioId::Sim2.initial_design().len(), 16);
        assert_eq!(ScenarioId::Sim1.search_grid().len(), 300);
        assert_eq!(ScenarioId::Sim2.search_grid().len(), 82 * 82);
        let p = &ScenarioId::Sim2.initial_design()[1];
        assert!((p[0] + 2.25).abs() < 1e-12 && (p[1] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn cohorts_are_seed_deterministic() {
        let spec = ScenarioSpec::new(ScenarioId::Sim2, 50, 3);
        assert_eq!(generate_cohort(&spec).unwrap(), generate_cohort(&spec).unwrap());
        assert!(generate_cohort(&ScenarioSpec::new(ScenarioId::Sim1, 9, 3)).is_err());
        assert!("sim9".parse::<ScenarioId>().unwrap_err().contains("sim1, sim2"));
    }
}
