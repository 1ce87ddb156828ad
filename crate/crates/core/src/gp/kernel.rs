use serde::{Deserialize, Serialize};

use super::GpError;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Matérn smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    Matern52,
    Matern32,
}

impl KernelFamily {
    /// Correlation at scaled distance `r = |Δ| / θ`.
    #[inline]
    pub fn correlation<T: Scalar>(self, r: T) -> T {
        match self {
            KernelFamily::Matern52 => {
                let s = T::lit(5.0_f64.sqrt()) * r;
                (T::one() + s + s * s / T::lit(3.0)) * (-s).exp()
            }
            KernelFamily::Matern32 => {
                let s = T::lit(3.0_f64.sqrt()) * r;
                (T::one() + s) * (-s).exp()
            }
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-', '/'], "").as_str() {
            "matern52" | "52" => Ok(Self::Matern52),
            "matern32" | "32" => Ok(Self::Matern32),
            other => Err(format!("unknown kernel `{other}` (expected matern52 or matern32)")),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Matern52 => "matern52",
            Self::Matern32 => "matern32",
        })
    }
}

/// Product Matérn kernel with one length scale per index dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    pub length_scales: Vec<T>,
    pub signal_variance: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(family: KernelFamily, length_scales: Vec<T>, signal_variance: T) -> Result<Self, GpError> {
        if length_scales.is_empty() || length_scales.iter().any(|&t| !(t > T::zero()) || !t.is_finite()) {
            return Err(GpError::InvalidHyperparameter(
                "length scales must be positive and finite".into(),
            ));
        }
        if !(signal_variance > T::zero()) || !signal_variance.is_finite() {
            return Err(GpError::InvalidHyperparameter(
                "signal variance must be positive and finite".into(),
            ));
        }
        Ok(Self {
            family,
            length_scales,
            signal_variance,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// `k(a, b)`; fails on dimension mismatch.
    pub fn eval(&self, a: &[T], b: &[T]) -> Result<T, GpError> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(GpError::Dimension {
                expected: self.dim(),
                found: if a.len() != self.dim() { a.len() } else { b.len() },
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[T], b: &[T]) -> T {
        let mut k = self.signal_variance;
        for ((&x, &y), &theta) in a.iter().zip(b).zip(&self.length_scales) {
            k = k * self.family.correlation((x - y).abs() / theta);
        }
        k
    }

    /// Kernel matrix over the rows of `points`, without any diagonal
    /// additions.
    pub fn covariance(&self, points: &Matrix<T>) -> Matrix<T> {
        let m = points.nrows();
        let mut k = Matrix::zeros(m, m);
        for i in 0..m {
            k[(i, i)] = self.signal_variance;
            for j in 0..i {
                let v = self.eval_unchecked(points.row(i), points.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Vector `(k(ψ_1, q), ..., k(ψ_m, q))`.
    pub fn cross(&self, points: &Matrix<T>, query: &[T]) -> Vec<T> {
        points.rows_iter().map(|p| self.eval_unchecked(p, query)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let m52 = KernelSpec::new(KernelFamily::Matern52, vec![1.0], 1.0).unwrap();
        let expected = (1.0 + 5.0_f64.sqrt() + 5.0 / 3.0) * (-(5.0_f64.sqrt())).exp();
        assert!((m52.eval(&[0.0], &[1.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.523_994_1).abs() < 1e-7);

        let m32 = KernelSpec::new(KernelFamily::Matern32, vec![1.0], 1.0).unwrap();
        let expected = (1.0 + 3.0_f64.sqrt()) * (-(3.0_f64.sqrt())).exp();
        assert!((m32.eval(&[0.5], &[-0.5]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.48336).abs() < 1e-5);

        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.3, 7.0], 2.0).unwrap();
        assert_eq!(k.eval(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = KernelSpec::new(KernelFamily::Matern52, vec![1.0, 1.0], 1.0).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(GpError::Dimension { .. })));
        assert!(KernelSpec::new(KernelFamily::Matern52, vec![0.0], 1.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Matern52, vec![1.0], -1.0).is_err());
    }

    #[test]
    fn covariance_entries_match_pointwise_kernel() {
        let k = KernelSpec::new(KernelFamily::Matern52, vec![0.4], 1.3).unwrap();
        let pts = Matrix::from_rows(&[vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let c = k.covariance(&pts);
        assert!(c.is_symmetric());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[(i, j)], k.eval(pts.row(i), pts.row(j)).unwrap());
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_stationary_and_bounded(
            a in prop::collection::vec(-3.0..3.0_f64, 2),
            b in prop::collection::vec(-3.0..3.0_f64, 2),
            shift in prop::collection::vec(-2.0..2.0_f64, 2),
            theta in prop::collection::vec(0.01..5.0_f64, 2),
            var in 0.1..10.0_f64,
            m32 in any::<bool>(),
        ) {
            let fam = if m32 { KernelFamily::Matern32 } else { KernelFamily::Matern52 };
            let k = KernelSpec::new(fam, theta, var).unwrap();
            let kab = k.eval(&a, &b).unwrap();
            prop_assert_eq!(kab, k.eval(&b, &a).unwrap());
            let a2: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
            let b2: Vec<f64> = b.iter().zip(&shift).map(|(x, s)| x + s).collect();
            prop_assert!((kab - k.eval(&a2, &b2).unwrap()).abs() < 1e-12 * var);
            // Reflecting one coordinate difference leaves the value unchanged.
            let b3 = vec![2.0 * a[0] - b[0], b[1]];
            prop_assert!((kab - k.eval(&a, &b3).unwrap()).abs() < 1e-12 * var);
            prop_assert!(kab >= 0.0);
            prop_assert!(kab <= var);
        }
    }
}
