use serde::{Deserialize, Serialize};

use super::GpError;
use crate::domain::Bounds;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Relative duplicate-exclusion distance, per unit of each dimension's range.
pub const DUPLICATE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointTag {
    Initial,
    Infill,
}

/// Computer-experiment data `{(ψ_i, υ_i)}` over an index box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design<T> {
    domain: Bounds<T>,
    points: Matrix<T>,
    responses: Vec<T>,
    tags: Vec<PointTag>,
}

impl<T: Scalar> Design<T> {
    pub fn new(domain: Bounds<T>) -> Self {
        let dim = domain.dim();
        Self {
            domain,
            points: Matrix::zeros(0, dim),
            responses: Vec::new(),
            tags: Vec::new(),
        }
    }

    /// Builds a design from initial points and their responses.
    pub fn from_points(domain: Bounds<T>, points: &[Vec<T>], responses: &[T]) -> Result<Self, GpError> {
        if points.len() != responses.len() {
            return Err(GpError::InvalidArgument(format!(
                "{} points but {} responses",
                points.len(),
                responses.len()
            )));
        }
        let mut d = Self::new(domain);
        for (p, &r) in points.iter().zip(responses) {
            d.push(p, r, PointTag::Initial)?;
        }
        Ok(d)
    }

    pub fn domain(&self) -> &Bounds<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn points(&self) -> &Matrix<T> {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[T] {
        self.points.row(i)
    }

    pub fn responses(&self) -> &[T] {
        &self.responses
    }

    pub fn tags(&self) -> &[PointTag] {
        &self.tags
    }

    /// Points mapped onto the unit hypercube.
    pub fn unit_points(&self) -> Matrix<T> {
        let rows: Vec<Vec<T>> = self.points.rows_iter().map(|p| self.domain.to_unit(p)).collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, self.dim()))
    }

    /// Whether `point` lies within the duplicate-exclusion distance of an
    /// existing design point (coordinate-wise, relative to each range).
    pub fn is_near_existing(&self, point: &[T]) -> bool {
        self.is_within(point, T::lit(DUPLICATE_DISTANCE))
    }

    /// Whether some design point differs from `point` by less than
    /// `relative * range_d` in every coordinate `d`.
    pub fn is_within(&self, point: &[T], relative: T) -> bool {
        let delta = relative;
        self.points.rows_iter().any(|p| {
            p.iter()
                .zip(point)
                .enumerate()
                .all(|(d, (&a, &b))| (a - b).abs() / self.domain.range(d) < delta)
        })
    }

    pub fn push(&mut self, point: &[T], response: T, tag: PointTag) -> Result<(), GpError> {
        self.domain.check_dim(point).map_err(|_| GpError::Dimension {
            expected: self.dim(),
            found: point.len(),
        })?;
        if point.iter().any(|x| !x.is_finite()) || !response.is_finite() {
            return Err(GpError::InvalidArgument("design entries must be finite".into()));
        }
        if self.is_near_existing(point) {
            return Err(GpError::DuplicatePoint(
                point.iter().map(|x| x.as_f64()).collect(),
            ));
        }
        self.points.push_row(point)?;
        self.responses.push(response);
        self.tags.push(tag);
        Ok(())
    }

    /// Same points with replaced responses.
    pub fn with_responses(&self, responses: Vec<T>) -> Result<Self, GpError> {
        if responses.len() != self.len() {
            return Err(GpError::InvalidArgument(format!(
                "expected {} responses, found {}",
                self.len(),
                responses.len()
            )));
        }
        Ok(Self {
            responses,
            ..self.clone()
        })
    }

    pub fn response_mean(&self) -> T {
        if self.is_empty() {
            return T::zero();
        }
        self.responses.iter().copied().sum::<T>() / T::from_usize_lossy(self.len())
    }

    /// Sample standard deviation of the responses (zero for fewer than two).
    pub fn response_sd(&self) -> T {
        let m = self.len();
        if m < 2 {
            return T::zero();
        }
        let mean = self.response_mean();
        let ss: T = self.responses.iter().map(|&r| (r - mean) * (r - mean)).sum();
        (ss / T::from_usize_lossy(m - 1)).sqrt()
    }

    pub fn max_response(&self) -> Option<(usize, T)> {
        self.responses
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (i, r)| match best {
                Some((_, b)) if b >= r => best,
                _ => Some((i, r)),
            })
    }
}
