//! Axis-aligned index boxes and the grids laid over them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("bounds must be nonempty with lower < upper in every dimension")]
    Empty,
    #[error("expected a point of dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("grid specification invalid: {0}")]
    Grid(String),
}

/// Box `[lower_d, upper_d]` in each dimension of the regime index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, DomainError> {
        if lower.is_empty()
            || lower.len() != upper.len()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(DomainError::Empty);
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![T::zero(); dim],
            upper: vec![T::one(); dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    #[inline]
    pub fn range(&self, d: usize) -> T {
        self.upper[d] - self.lower[d]
    }

    pub fn check_dim(&self, point: &[T]) -> Result<(), DomainError> {
        if point.len() != self.dim() {
            return Err(DomainError::Dimension {
                expected: self.dim(),
                found: point.len(),
            });
        }
        Ok(())
    }

    /// Affine map of `point` onto the unit hypercube.
    pub fn to_unit(&self, point: &[T]) -> Vec<T> {
        point
            .iter()
            .enumerate()
            .map(|(d, &x)| (x - self.lower[d]) / self.range(d))
            .collect()
    }

    pub fn from_unit(&self, unit: &[T]) -> Vec<T> {
        unit.iter()
            .enumerate()
            .map(|(d, &u)| self.lower[d] + u * self.range(d))
            .collect()
    }

    pub fn contains(&self, point: &[T]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .enumerate()
                .all(|(d, &x)| x >= self.lower[d] && x <= self.upper[d])
    }

    pub fn clamp(&self, point: &[T]) -> Vec<T> {
        point
            .iter()
            .enumerate()
            .map(|(d, &x)| x.max(self.lower[d]).min(self.upper[d]))
            .collect()
    }

    /// Tensor grid with `counts[d]` equally spaced points per dimension,
    /// endpoints included, in lexicographic order.
    pub fn uniform_grid(&self, counts: &[usize]) -> Result<Vec<Vec<T>>, DomainError> {
        if counts.len() != self.dim() || counts.contains(&0) {
            return Err(DomainError::Grid(format!(
                "need one positive count per dimension, got {counts:?}"
            )));
        }
        let axes: Vec<Vec<T>> = counts
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                if c == 1 {
                    vec![self.lower[d] + self.range(d) * T::lit(0.5)]
                } else {
                    (0..c)
                        .map(|k| {
                            self.lower[d]
                                + self.range(d) * T::from_usize_lossy(k)
                                    / T::from_usize_lossy(c - 1)
                        })
                        .collect()
                }
            })
            .collect();
        Ok(tensor(&axes))
    }

    /// Tensor grid `lower_d + k * step_d` for every `k` keeping the point at
    /// or below `upper_d` (strictly below when `include_upper` is false).
    pub fn stepped_grid(&self, steps: &[T], include_upper: bool) -> Result<Vec<Vec<T>>, DomainError> {
        Ok(tensor(&self.stepped_axes(steps, include_upper)?))
    }

    pub fn stepped_axes(&self, steps: &[T], include_upper: bool) -> Result<Vec<Vec<T>>, DomainError> {
        if steps.len() != self.dim() || steps.iter().any(|&s| !(s > T::zero())) {
            return Err(DomainError::Grid(format!(
                "need one positive step per dimension, got {} steps",
                steps.len()
            )));
        }
        Ok(steps
            .iter()
            .enumerate()
            .map(|(d, &s)| {
                let tol = s * T::lit(1e-9);
                let mut axis = Vec::new();
                let mut k = 0usize;
                loop {
                    let x = self.lower[d] + s * T::from_usize_lossy(k);
                    let inside = if include_upper {
                        x <= self.upper[d] + tol
                    } else {
                        x < self.upper[d] - tol
                    };
                    if !inside {
                        break;
                    }
                    axis.push(x.min(self.upper[d]));
                    k += 1;
                }
                axis
            })
            .collect())
    }
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn tensor<T: Copy>(axes: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut p = prefix.clone();
                p.push(x);
                next.push(p);
            }
        }
        out = next;
    }
    out
}
