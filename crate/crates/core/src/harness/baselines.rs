use serde::Serialize;

use super::HarnessError;
use crate::domain::Bounds;
use crate::linalg::{least_squares, Cholesky, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub point: Vec<f64>,
    pub value: f64,
    /// Grid points evaluated, missing ones included.
    pub evaluations: usize,
    pub missing: usize,
}

/// Exhaustive search; missing values are skipped and ties go to the
/// earliest (lexicographically smallest) grid point.
pub fn grid_search<F>(mut surface: F, grid: &[Vec<f64>]) -> Result<GridResult, HarnessError>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    if grid.is_empty() {
        return Err(HarnessError::Invalid("grid is empty".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut missing = 0;
    for (i, psi) in grid.iter().enumerate() {
        match surface(psi) {
            Some(v) if v.is_finite() => {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            _ => missing += 1,
        }
    }
    let (i, value) = best.ok_or_else(|| HarnessError::Invalid("every grid point is missing".into()))?;
    Ok(GridResult {
        point: grid[i].clone(),
        value,
        evaluations: grid.len(),
        missing,
    })
}

/// `(1, ψ_1, ψ_1², ψ_2, ψ_2², ..., ψ_1ψ_2, ...)`: per-dimension linear and
/// square terms, then pairwise interactions.
pub fn quadratic_features(psi: &[f64]) -> Vec<f64> {
    let mut f = vec![1.0];
    for &p in psi {
        f.push(p);
        f.push(p * p);
    }
    for i in 0..psi.len() {
        for j in (i + 1)..psi.len() {
            f.push(psi[i] * psi[j]);
        }
    }
    f
}

pub fn quadratic_feature_names(dim: usize) -> Vec<String> {
    let mut names = vec!["1".to_string()];
    for d in 1..=dim {
        names.push(format!("psi{d}"));
        names.push(format!("psi{d}^2"));
    }
    for i in 1..=dim {
        for j in (i + 1)..=dim {
            names.push(format!("psi{i}*psi{j}"));
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsmFit {
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
    pub point: Vec<f64>,
    pub value: f64,
    /// True when the optimum is the interior stationary point.
    pub stationary: bool,
}

impl MsmFit {
    pub fn predict(&self, psi: &[f64]) -> f64 {
        quadratic_features(psi).iter().zip(&self.coefficients).map(|(f, b)| f * b).sum()
    }
}

/// Least-squares quadratic marginal structural model of the value and its
/// maximizer over `bounds`: the stationary point when the fit is concave
/// with an interior maximum, otherwise the best point of a fine grid.
pub fn msm_baseline(points: &[Vec<f64>], values: &[f64], bounds: &Bounds<f64>) -> Result<MsmFit, HarnessError> {
    let dim = bounds.dim();
    if points.len() != values.len() {
        return Err(HarnessError::Invalid(format!(
            "{} points but {} values",
            points.len(),
            values.len()
        )));
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| quadratic_features(p)).collect();
    let x = Matrix::from_rows(&rows).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let coefficients = least_squares(&x, values).map_err(|e| HarnessError::Msm(e.to_string()))?;

    // Gradient g + H ψ with g_d = β_lin(d) and H from squares and interactions.
    let mut h = Matrix::zeros(dim, dim);
    let mut g = vec![0.0; dim];
    for d in 0..dim {
        g[d] = coefficients[1 + 2 * d];
        h[(d, d)] = 2.0 * coefficients[2 + 2 * d];
    }
    let mut k = 1 + 2 * dim;
    for i in 0..dim {
        for j in (i + 1)..dim {
            h[(i, j)] = coefficients[k];
            h[(j, i)] = coefficients[k];
            k += 1;
        }
    }
    let neg_h = Matrix::from_fn(dim, dim, |i, j| -h[(i, j)]);
    let mut fit = MsmFit {
        coefficients,
        feature_names: quadratic_feature_names(dim),
        point: Vec::new(),
        value: f64::NEG_INFINITY,
        stationary: false,
    };
    if let Ok(chol) = Cholesky::factor(&neg_h, "negative MSM Hessian") {
        // −H ψ* = g
        let psi = chol.solve(&g);
        if bounds.contains(&psi) {
            fit.value = fit.predict(&psi);
            fit.point = psi;
            fit.stationary = true;
            return Ok(fit);
        }
    }
    let per_axis = match dim {
        1 => 3001,
        2 => 201,
        _ => 21,
    };
    let grid = bounds.uniform_grid(&vec![per_axis; dim]).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    for psi in grid {
        let v = fit.predict(&psi);
        if v > fit.value {
            fit.value = v;
            fit.point = psi;
        }
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_search_argmax_and_ties() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        let grid = b.stepped_grid(&[0.01], true).unwrap();
        let r = grid_search(|p| Some(-(p[0] - 0.3).powi(2)), &grid).unwrap();
        assert!((r.point[0] - 0.3).abs() < 1e-12);
        assert_eq!(r.value, -(r.point[0] - 0.3).powi(2));
        let flat = grid_search(|_| Some(1.0), &grid).unwrap();
        assert_eq!(flat.point, vec![0.0]);
        let gaps = grid_search(|p| if p[0] < 0.5 { None } else { Some(p[0]) }, &grid).unwrap();
        assert_eq!(gaps.missing, 50);
        assert!(grid_search(|_| None, &grid).is_err());
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        let pts = b.uniform_grid(&[7]).unwrap();
        let ys: Vec<f64> = pts.iter().map(|p| 1.0 + 0.6 * p[0] - p[0] * p[0]).collect();
        let fit = msm_baseline(&pts, &ys, &b).unwrap();
        for (c, want) in fit.coefficients.iter().zip([1.0, 0.6, -1.0]) {
            assert!((c - want).abs() < 1e-8);
        }
        assert!(fit.stationary);
        assert!((fit.point[0] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn two_dimensional_fit_includes_interaction_and_checks_rank() {
        let b = Bounds::new(vec![50.0, 200.0], vec![100.0, 600.0]).unwrap();
        let pts = b.uniform_grid(&[4, 4]).unwrap();
        let f = |p: &[f64]| 300.0 + 2.0 * p[0] - 0.01 * p[0] * p[0] + 0.5 * p[1] - 0.001 * p[1] * p[1] + 0.001 * p[0] * p[1];
        let ys: Vec<f64> = pts.iter().map(|p| f(p)).collect();
        let fit = msm_baseline(&pts, &ys, &b).unwrap();
        assert_eq!(fit.feature_names.last().unwrap(), "psi1*psi2");
        assert!((fit.coefficients[5] - 0.001).abs() < 1e-8);
        assert!(msm_baseline(&pts[..4], &ys[..4], &b).is_err());
    }

    #[test]
    fn convex_fit_falls_back_to_boundary_scan() {
        let b: Bounds<f64> = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        let pts = b.uniform_grid(&[5]).unwrap();
        let ys: Vec<f64> = pts.iter().map(|p| (p[0] - 0.2).powi(2)).collect();
        let fit = msm_baseline(&pts, &ys, &b).unwrap();
        assert!(!fit.stationary);
        assert_eq!(fit.point, vec![1.0]);
    }
}
