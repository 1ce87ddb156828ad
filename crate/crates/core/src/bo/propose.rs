use serde::Serialize;

use super::{expected_improvement, BoConfig, BoError, EiBaseline};
use crate::domain::Bounds;
use crate::gp::{Design, GpFit};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal<T> {
    pub point: Vec<T>,
    /// EI at `point`.
    pub ei: T,
}

/// EI baseline: the best observed response, or the best fitted value of
/// the surrogate at the design points.
pub fn ei_baseline<T: Scalar>(fit_for_ei: &GpFit<T>, design: &Design<T>, mode: EiBaseline) -> T {
    let values = match mode {
        EiBaseline::ObservedMax => design.responses(),
        EiBaseline::ReinterpolatedMax => fit_for_ei.responses(),
    };
    values.iter().copied().fold(T::neg_infinity(), T::max)
}

fn near_any<T: Scalar>(u: &[T], others: &[Vec<T>], delta: T) -> bool {
    others
        .iter()
        .any(|p| p.iter().zip(u).all(|(&a, &b)| (a - b).abs() < delta))
}

/// Maximizes EI over the candidate grid, skipping candidates within the
/// exclusion distance of a design point or of an `excluded` point, then
/// polishes the winner with a local simplex search. Ties go to the
/// lexicographically smallest candidate.
pub fn propose_next<T: Scalar>(
    fit_for_ei: &GpFit<T>,
    design: &Design<T>,
    config: &BoConfig<T>,
    excluded: &[Vec<T>],
) -> Result<Proposal<T>, BoError> {
    let domain = design.domain();
    let dim = domain.dim();
    config.validate(dim)?;
    let counts = config.candidate_counts(dim);
    let baseline = ei_baseline(fit_for_ei, design, config.baseline_mode());
    let delta = config.duplicate_distance;

    let mut taken: Vec<Vec<T>> = design.points().rows_iter().map(|p| domain.to_unit(p)).collect();
    taken.extend(excluded.iter().map(|p| domain.to_unit(p)));

    let ei_at = |u: &[T]| {
        let (mean, var) = fit_for_ei.predict_unit(u);
        expected_improvement(mean, var, baseline)
    };

    let candidates = Bounds::unit(dim).uniform_grid(&counts)?;
    let mut best: Option<(Vec<T>, T)> = None;
    for u in &candidates {
        if near_any(u, &taken, delta) {
            continue;
        }
        let ei = ei_at(u);
        if best.as_ref().is_none_or(|(_, b)| ei > *b) {
            best = Some((u.clone(), ei));
        }
    }
    let Some((mut best_u, mut best_ei)) = best else {
        return Err(BoError::Saturated {
            candidates: candidates.len(),
        });
    };

    if config.refine && best_ei > T::zero() {
        let clamp = |u: &[T]| -> Vec<T> { u.iter().map(|&x| x.max(T::zero()).min(T::one())).collect() };
        let step: Vec<T> = counts
            .iter()
            .map(|&c| T::one() / T::from_usize_lossy(c - 1))
            .collect();
        let opts = NelderMeadOptions {
            max_evals: 60 * dim,
            f_tol: T::lit(1e-10),
            x_tol: T::lit(1e-7),
        };
        let min = nelder_mead(|u: &[T]| -ei_at(&clamp(u)), &best_u, &step, opts);
        let u = clamp(&min.x);
        let ei = ei_at(&u);
        if ei > best_ei && !near_any(&u, &taken, delta) {
            best_u = u;
            best_ei = ei;
        }
    }
    Ok(Proposal {
        point: domain.from_unit(&best_u),
        ei: best_ei,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bo::GpType;
    use crate::gp::{GpFit, KernelFamily, KernelSpec, NoiseSpec};

    fn one_point_fit(at: f64) -> (GpFit<f64>, Design<f64>) {
        let d = Design::from_points(Bounds::unit(1), &[vec![at]], &[0.0]).unwrap();
        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.2], 1.0).unwrap();
        (GpFit::condition(&d, k, NoiseSpec::Interpolating, Some(0.0)).unwrap(), d)
    }

    #[test]
    fn grid_argmax_without_refinement_and_no_worse_with_it() {
        // A single point at 0.5 with prior mean equal to the observation: EI
        // depends only on the variance, which is largest at the far edge 0.
        let d = Design::from_points(Bounds::unit(1), &[vec![0.6]], &[0.0]).unwrap();
        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.2], 1.0).unwrap();
        let fit = GpFit::condition(&d, k, NoiseSpec::Interpolating, Some(-0.5)).unwrap();
        let mut cfg = BoConfig::<f64>::new(GpType::Int, 1);
        cfg.candidates = vec![101];
        cfg.refine = false;
        let grid = Bounds::unit(1).uniform_grid(&[101]).unwrap();
        let (mut arg, mut best) = (0, f64::NEG_INFINITY);
        for (i, g) in grid.iter().enumerate() {
            let post = fit.posterior_f(std::slice::from_ref(g)).unwrap();
            let ei = expected_improvement(post.mean[0], post.variance[0], 0.0);
            if ei > best {
                best = ei;
                arg = i;
            }
        }
        let p = propose_next(&fit, &d, &cfg, &[]).unwrap();
        assert_eq!(p.point, grid[arg]);
        assert!((p.ei - best).abs() < 1e-15);

        cfg.refine = true;
        let r = propose_next(&fit, &d, &cfg, &[]).unwrap();
        assert!(r.ei >= best);
        assert!((r.point[0] - grid[arg][0]).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn symmetric_maxima_break_ties_lexicographically() {
        let (fit, d) = one_point_fit(0.5);
        let mut cfg = BoConfig::<f64>::new(GpType::Int, 1);
        cfg.candidates = vec![11];
        for refine in [false, true] {
            cfg.refine = refine;
            let p = propose_next(&fit, &d, &cfg, &[]).unwrap();
            assert!(p.point[0] < 0.5, "{:?}", p.point);
        }
    }

    #[test]
    fn excluded_points_are_skipped_and_saturation_is_reported() {
        let d = Design::from_points(Bounds::unit(1), &[vec![0.0], vec![1.0]], &[0.0, 0.0]).unwrap();
        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.2], 1.0).unwrap();
        let fit = GpFit::condition(&d, k, NoiseSpec::Interpolating, Some(0.0)).unwrap();
        let mut cfg = BoConfig::<f64>::new(GpType::Int, 1);
        cfg.candidates = vec![3];
        cfg.refine = false;
        let p = propose_next(&fit, &d, &cfg, &[]).unwrap();
        assert_eq!(p.point, vec![0.5]);
        assert!(matches!(
            propose_next(&fit, &d, &cfg, &[vec![0.5]]),
            Err(BoError::Saturated { candidates: 3 })
        ));
    }

    #[test]
    fn proposals_keep_their_distance() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![-2.0 + 0.7 * i as f64]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| (p[0] * 1.3).sin()).collect();
        let d = Design::from_points(Bounds::new(vec![-2.0], vec![1.5]).unwrap(), &pts, &ys).unwrap();
        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.3], 1.0).unwrap();
        let fit = GpFit::condition(&d, k, NoiseSpec::Interpolating, None).unwrap();
        let cfg = BoConfig::<f64>::new(GpType::Int, 1);
        let p = propose_next(&fit, &d, &cfg, &[]).unwrap();
        assert!(!d.is_within(&p.point, cfg.duplicate_distance));
        assert!(d.domain().contains(&p.point));
    }
}
