use serde::{Deserialize, Serialize};

use super::{DtrError, Trajectory};
use crate::domain::Bounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegimeKind {
    /// Treat at stage `t` iff the first stage-`t` covariate exceeds `ψ_t`.
    ThresholdPerStage,
    /// Single stage; treat iff every covariate `x_d` exceeds `ψ_d`.
    JointThreshold,
    /// At every stage treat iff
    /// `ψ_1 x[first] + (1 − ψ_1) x[second] > 0.5 − 3 ψ_3 u`, with `u` the
    /// baseline covariate at `baseline`. The free index is `(ψ_1, ψ_3)`.
    LinearSharedRule {
        first: usize,
        second: usize,
        baseline: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFamily {
    pub kind: RegimeKind,
    pub bounds: Bounds<f64>,
}

impl RegimeFamily {
    pub fn threshold_per_stage(bounds: Bounds<f64>) -> Self {
        Self {
            kind: RegimeKind::ThresholdPerStage,
            bounds,
        }
    }

    pub fn joint_threshold(bounds: Bounds<f64>) -> Self {
        Self {
            kind: RegimeKind::JointThreshold,
            bounds,
        }
    }

    pub fn linear_shared(first: usize, second: usize, baseline: usize, bounds: Bounds<f64>) -> Result<Self, DtrError> {
        if bounds.dim() != 2 {
            return Err(DtrError::Dimension {
                expected: 2,
                found: bounds.dim(),
            });
        }
        Ok(Self {
            kind: RegimeKind::LinearSharedRule {
                first,
                second,
                baseline,
            },
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn check_index(&self, psi: &[f64]) -> Result<(), DtrError> {
        if psi.len() != self.dim() {
            return Err(DtrError::Dimension {
                expected: self.dim(),
                found: psi.len(),
            });
        }
        Ok(())
    }

    /// Treatment recommended at `stage` for this trajectory.
    pub fn recommends(&self, traj: &Trajectory, stage: usize, psi: &[f64]) -> bool {
        let x = &traj.stage_covariates[stage];
        match &self.kind {
            RegimeKind::ThresholdPerStage => x[0] > psi[stage],
            RegimeKind::JointThreshold => x.iter().zip(psi).all(|(&xi, &p)| xi > p),
            RegimeKind::LinearSharedRule {
                first,
                second,
                baseline,
            } => {
                let u = traj.baseline[*baseline];
                psi[0] * x[*first] + (1.0 - psi[0]) * x[*second] > 0.5 - 3.0 * psi[1] * u
            }
        }
    }
}

/// Whether every observed treatment matches the regime's recommendation.
pub fn is_adherent(traj: &Trajectory, family: &RegimeFamily, psi: &[f64]) -> bool {
    traj.treatments
        .iter()
        .enumerate()
        .all(|(t, &z)| family.recommends(traj, t, psi) == z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(dim: usize) -> RegimeFamily {
        RegimeFamily::threshold_per_stage(Bounds::new(vec![-2.0; dim], vec![2.0; dim]).unwrap())
    }

    #[test]
    fn single_stage_threshold() {
        let f = family(1);
        assert!(is_adherent(&Trajectory::single(vec![0.5], true, 0.0).unwrap(), &f, &[0.0]));
        assert!(!is_adherent(&Trajectory::single(vec![0.5], false, 0.0).unwrap(), &f, &[0.0]));
    }

    #[test]
    fn two_stage_adherence_is_a_conjunction() {
        let f = family(2);
        let psi = [0.1, -0.3];
        for &(x1, x2) in &[(0.5, 0.0), (-0.4, -1.0), (0.1, -0.3)] {
            let want = (x1 > psi[0], x2 > psi[1]);
            for z1 in [false, true] {
                for z2 in [false, true] {
                    let tr = Trajectory::new(vec![vec![x1], vec![x2]], vec![z1, z2], 0.0, vec![]).unwrap();
                    assert_eq!(is_adherent(&tr, &f, &psi), (z1, z2) == want);
                }
            }
        }
    }

    #[test]
    fn joint_and_linear_rules() {
        let j = RegimeFamily::joint_threshold(Bounds::new(vec![50.0, 200.0], vec![100.0, 600.0]).unwrap());
        let tr = Trajectory::single(vec![80.0, 350.0], true, 400.0).unwrap();
        assert!(is_adherent(&tr, &j, &[70.0, 300.0]));
        assert!(!is_adherent(&tr, &j, &[70.0, 350.0]));

        let l = RegimeFamily::linear_shared(0, 1, 0, Bounds::unit(2)).unwrap();
        let tr = Trajectory::new(vec![vec![1.0, 0.0]], vec![true], 0.0, vec![1.0]).unwrap();
        // 0.4·1 + 0.6·0 = 0.4 > 0.5 − 3·0.1·1 = 0.2
        assert!(l.recommends(&tr, 0, &[0.4, 0.1]));
        // 0.4 > 0.5 fails without the baseline term
        assert!(!l.recommends(&tr, 0, &[0.4, 0.0]));
    }
}
