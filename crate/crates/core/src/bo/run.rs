use std::fmt::Display;

use log::{debug, warn};
use serde::Serialize;

use super::{propose_next, reinterpolate, reinterpolation_gaps, BoConfig, BoError, GpType};
use crate::gp::{
    fit_hetero_gp, fit_hyperparams, Design, FitOptions, GpFit, HeteroOptions, Hyperparameters, NoiseModel,
    PointTag,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incumbent<T> {
    pub point: Vec<T>,
    /// Posterior-mean value at `point`.
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry<T> {
    /// 0 for the initial design.
    pub iteration: usize,
    pub point: Vec<T>,
    pub value: T,
    pub tag: PointTag,
    /// Maximal EI when the point was proposed.
    pub max_ei: Option<T>,
    /// Incumbent of the surrogate that proposed the point.
    pub incumbent: Option<Incumbent<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedPoint<T> {
    pub iteration: usize,
    pub point: Vec<T>,
    pub reason: String,
}

/// Surrogate state after `added` accepted infills.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint<T> {
    pub added: usize,
    pub design_size: usize,
    pub incumbent: Incumbent<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReinterpolationAudit<T> {
    pub added: usize,
    pub max_mean_gap: T,
    pub max_sample_variance: T,
    pub jitter: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Budget,
    Plateau,
    Saturated,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoTrace<T> {
    pub entries: Vec<TraceEntry<T>>,
    pub failed: Vec<FailedPoint<T>>,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub final_incumbent: Incumbent<T>,
    /// Evaluator calls made by the loop, failed ones included.
    pub evaluations: usize,
    pub stop: StopReason,
    pub audits: Vec<ReinterpolationAudit<T>>,
    #[serde(skip)]
    pub fits: Vec<(usize, GpFit<T>)>,
}

impl<T: Scalar> BoTrace<T> {
    pub fn accepted_infills(&self) -> usize {
        self.entries.iter().filter(|e| e.tag == PointTag::Infill).count()
    }

    /// Checkpoint after `added` infills, or the last one if the run stopped
    /// earlier.
    pub fn checkpoint_at(&self, added: usize) -> &Checkpoint<T> {
        self.checkpoints
            .iter()
            .rev()
            .find(|c| c.added <= added)
            .unwrap_or(&self.checkpoints[0])
    }
}

/// Fits the surrogate of the requested type.
pub fn fit_surrogate<T: Scalar>(
    design: &Design<T>,
    config: &BoConfig<T>,
    warm: Option<Hyperparameters<T>>,
) -> Result<GpFit<T>, BoError> {
    let fit = FitOptions {
        warm_start: warm,
        ..config.fit.clone()
    };
    let out = match config.gp_type {
        GpType::Int => fit_hyperparams(design, config.family, NoiseModel::Interpolating, &fit)?,
        GpType::HM => fit_hyperparams(design, config.family, NoiseModel::Homoskedastic, &fit)?,
        GpType::HE => fit_hetero_gp(
            design,
            config.family,
            &HeteroOptions {
                max_iter: config.hetero_max_iter,
                tol: config.hetero_tol,
                fit,
            },
        )?,
    };
    Ok(out)
}

/// Posterior-mean argmax over `grid`; ties go to the earliest grid point.
pub fn incumbent<T: Scalar>(fit: &GpFit<T>, grid: &[Vec<T>]) -> Incumbent<T> {
    let mut best: Option<(usize, T)> = None;
    for (i, q) in grid.iter().enumerate() {
        let v = fit.predict_mean(q);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (i, value) = best.expect("evaluation grid is never empty");
    Incumbent {
        point: grid[i].clone(),
        value,
    }
}

/// Budgeted sequential design. Each iteration fits the surrogate,
/// re-interpolates regressive fits, proposes the EI maximizer and evaluates
/// it. A failed evaluation excludes the point and retries once with the next
/// proposal.
pub fn run_bo<T, E, F>(mut evaluator: F, initial: Design<T>, config: &BoConfig<T>) -> Result<BoTrace<T>, BoError>
where
    T: Scalar,
    E: Display,
    F: FnMut(&[T]) -> Result<T, E>,
{
    let dim = initial.dim();
    config.validate(dim)?;
    let eval_grid = initial.domain().uniform_grid(&config.eval_counts(dim))?;

    let mut entries: Vec<TraceEntry<T>> = initial
        .points()
        .rows_iter()
        .zip(initial.responses())
        .map(|(p, &v)| TraceEntry {
            iteration: 0,
            point: p.to_vec(),
            value: v,
            tag: PointTag::Initial,
            max_ei: None,
            incumbent: None,
        })
        .collect();
    let mut design = initial;
    let mut failed = Vec::new();
    let mut excluded: Vec<Vec<T>> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut fits = Vec::new();
    let mut audits = Vec::new();
    let mut warm = None;
    let mut evaluations = 0;
    let mut iteration = 0;
    let mut flat_streak = 0;
    let mut stop = StopReason::Budget;

    loop {
        let fit = fit_surrogate(&design, config, warm.take())?;
        if config.warm_start {
            warm = Some(fit.hyperparameters());
        }
        let added = design.len() - entries.iter().filter(|e| e.tag == PointTag::Initial).count();
        let inc = incumbent(&fit, &eval_grid);
        checkpoints.push(Checkpoint {
            added,
            design_size: design.len(),
            incumbent: inc.clone(),
        });
        if config.keep_fits_at.contains(&added) {
            fits.push((added, fit.clone()));
        }
        if iteration >= config.budget || stop != StopReason::Budget {
            break;
        }

        let ei_fit = if config.gp_type.is_regressive() {
            let r = reinterpolate(&fit)?;
            if config.audit_reinterpolation {
                let (gap, var) = reinterpolation_gaps(&fit, &r, 200);
                audits.push(ReinterpolationAudit {
                    added,
                    max_mean_gap: gap,
                    max_sample_variance: var,
                    jitter: r.jitter(),
                });
            }
            r
        } else {
            fit
        };

        iteration += 1;
        let mut accepted = None;
        for _attempt in 0..2 {
            let prop = match propose_next(&ei_fit, &design, config, &excluded) {
                Ok(p) => p,
                Err(BoError::Saturated { candidates }) => {
                    warn!("candidate grid of {candidates} points is saturated; stopping");
                    stop = StopReason::Saturated;
                    break;
                }
                Err(e) => return Err(e),
            };
            evaluations += 1;
            match evaluator(&prop.point) {
                Ok(v) if v.is_finite() => {
                    accepted = Some((prop, v));
                    break;
                }
                outcome => {
                    let reason = match outcome {
                        Ok(v) => format!("non-finite value {v}"),
                        Err(e) => e.to_string(),
                    };
                    debug!("evaluation failed at {:?}: {reason}", prop.point);
                    excluded.push(prop.point.clone());
                    failed.push(FailedPoint {
                        iteration,
                        point: prop.point,
                        reason,
                    });
                }
            }
        }
        let mut max_ei = None;
        if let Some((prop, v)) = accepted {
            design.push(&prop.point, v, PointTag::Infill)?;
            max_ei = Some(prop.ei);
            entries.push(TraceEntry {
                iteration,
                point: prop.point,
                value: v,
                tag: PointTag::Infill,
                max_ei: Some(prop.ei),
                incumbent: Some(inc),
            });
        }
        if stop == StopReason::Saturated {
            break;
        }
        if let (Some(p), Some(ei)) = (&config.plateau, max_ei) {
            flat_streak = if ei < p.epsilon { flat_streak + 1 } else { 0 };
            if flat_streak >= p.patience {
                stop = StopReason::Plateau;
            }
        }
    }

    let final_incumbent = checkpoints.last().map(|c: &Checkpoint<T>| c.incumbent.clone()).expect("at least one fit");
    Ok(BoTrace {
        entries,
        failed,
        checkpoints,
        final_incumbent,
        evaluations,
        stop,
        audits,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Bounds;

    fn quadratic_design(m: usize) -> Design<f64> {
        let b = Bounds::<f64>::unit(1);
        let pts = b.uniform_grid(&[m]).unwrap();
        let ys: Vec<f64> = pts.iter().map(|p| -(p[0] - 0.3).powi(2)).collect();
        Design::from_points(b, &pts, &ys).unwrap()
    }

    #[test]
    fn zero_budget_keeps_the_initial_design() {
        let cfg = BoConfig::new(GpType::Int, 0);
        let trace = run_bo(|_: &[f64]| Ok::<_, String>(0.0), quadratic_design(6), &cfg).unwrap();
        assert_eq!(trace.entries.len(), 6);
        assert_eq!(trace.evaluations, 0);
        assert_eq!(trace.checkpoints.len(), 1);
        let fit = fit_surrogate(&quadratic_design(6), &cfg, None).unwrap();
        let grid = Bounds::unit(1).uniform_grid(&[512]).unwrap();
        assert_eq!(trace.final_incumbent, incumbent(&fit, &grid));
    }

    #[test]
    fn failures_are_recorded_and_retried() {
        let cfg = BoConfig::new(GpType::Int, 3);
        let mut calls = 0;
        let trace = run_bo(
            |p: &[f64]| {
                calls += 1;
                if calls == 1 {
                    Err("no adherent patients".to_string())
                } else {
                    Ok(-(p[0] - 0.3).powi(2))
                }
            },
            quadratic_design(5),
            &cfg,
        )
        .unwrap();
        assert_eq!(trace.failed.len(), 1);
        assert_eq!(trace.accepted_infills(), 3);
        assert_eq!(trace.entries.len(), 5 + 3);
        assert_eq!(trace.evaluations, 4);
        let bad = &trace.failed[0].point;
        assert!(trace.entries.iter().all(|e| &e.point != bad));
    }
}
