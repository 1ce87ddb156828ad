//! Allocation-free profiled log marginal likelihood for the optimizer's inner
//! loop. Agrees with the general conditioning path up to rounding.

use super::{KernelFamily, JITTER_MAX, JITTER_START};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) struct LikelihoodWorkspace<'a, T> {
    family: KernelFamily,
    m: usize,
    dim: usize,
    /// `|u_i,d - u_j,d|` for `j < i`, laid out pair-major.
    diffs: Vec<T>,
    responses: &'a [T],
    cov: Vec<T>,
    lower: Vec<T>,
    z1: Vec<T>,
    zy: Vec<T>,
    scaled: Vec<T>,
}

impl<'a, T: Scalar> LikelihoodWorkspace<'a, T> {
    pub(crate) fn new(family: KernelFamily, unit: &Matrix<T>, responses: &'a [T]) -> Self {
        let m = unit.nrows();
        let dim = unit.ncols();
        let mut diffs = Vec::with_capacity(m * m.saturating_sub(1) / 2 * dim);
        for i in 0..m {
            for j in 0..i {
                for d in 0..dim {
                    diffs.push((unit.row(i)[d] - unit.row(j)[d]).abs());
                }
            }
        }
        Self {
            family,
            m,
            dim,
            diffs,
            responses,
            cov: vec![T::zero(); m * m],
            lower: vec![T::zero(); m * m],
            z1: vec![T::zero(); m],
            zy: vec![T::zero(); m],
            scaled: vec![T::zero(); dim],
        }
    }

    /// Log marginal likelihood with the constant mean profiled by GLS, or
    /// `None` when no jitter on the ladder makes the matrix factorizable.
    pub(crate) fn lml(&mut self, length_scales: &[T], signal: T, noise: impl Fn(usize) -> T) -> Option<T> {
        let (m, dim) = (self.m, self.dim);
        let (c, poly2) = match self.family {
            KernelFamily::Matern52 => (T::lit(5.0_f64.sqrt()), T::lit(1.0 / 3.0)),
            KernelFamily::Matern32 => (T::lit(3.0_f64.sqrt()), T::zero()),
        };
        for (s, &theta) in self.scaled.iter_mut().zip(length_scales) {
            *s = c / theta;
        }
        let mut p = 0;
        for i in 0..m {
            for j in 0..i {
                let mut poly = signal;
                let mut total = T::zero();
                for d in 0..dim {
                    let s = self.diffs[p + d] * self.scaled[d];
                    poly = poly * (T::one() + s + poly2 * s * s);
                    total = total + s;
                }
                p += dim;
                self.cov[i * m + j] = poly * (-total).exp();
            }
            self.cov[i * m + i] = signal + noise(i);
        }

        let ten = T::lit(10.0);
        let ceiling = signal * T::lit(JITTER_MAX * 1.000_001);
        let mut jitter = signal * T::lit(JITTER_START);
        while jitter <= ceiling {
            if self.factor(jitter) {
                return Some(self.profiled());
            }
            jitter = jitter * ten;
        }
        None
    }

    fn factor(&mut self, jitter: T) -> bool {
        let m = self.m;
        for i in 0..m {
            let (done, rest) = self.lower.split_at_mut(i * m);
            let row = &mut rest[..=i];
            let cov = &self.cov[i * m..i * m + i + 1];
            for j in 0..i {
                let prev = &done[j * m..j * m + j + 1];
                row[j] = (cov[j] - dot(&row[..j], &prev[..j])) / prev[j];
            }
            let d = cov[i] + jitter - dot(&row[..i], &row[..i]);
            if !(d > T::zero()) || !d.is_finite() {
                return false;
            }
            row[i] = d.sqrt();
        }
        true
    }

    fn profiled(&mut self) -> T {
        let m = self.m;
        let l = &self.lower;
        let mut log_det = T::zero();
        for i in 0..m {
            let row = &l[i * m..i * m + i];
            let d = l[i * m + i];
            self.z1[i] = (T::one() - dot(row, &self.z1[..i])) / d;
            self.zy[i] = (self.responses[i] - dot(row, &self.zy[..i])) / d;
            log_det = log_det + d.ln();
        }
        let mu = dot(&self.z1, &self.zy) / dot(&self.z1, &self.z1);
        let quad = self
            .z1
            .iter()
            .zip(&self.zy)
            .fold(T::zero(), |acc, (&a, &b)| {
                let r = b - mu * a;
                acc + r * r
            });
        -T::lit(0.5) * quad - log_det - T::lit(0.5 * LOG_2PI) * T::from_usize_lossy(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Bounds;
    use crate::gp::{log_marginal_likelihood, Design, KernelSpec, NoiseSpec};

    #[test]
    fn agrees_with_general_conditioning() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 6) as f64 / 5.0, (i / 6) as f64 / 4.0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let d = Design::from_points(Bounds::unit(2), &pts, &ys).unwrap();
        for family in [KernelFamily::Matern52, KernelFamily::Matern32] {
            for (theta, var, noise) in [([0.3, 0.7], 1.3, 0.01), ([0.05, 2.0], 0.4, 0.0)] {
                let k = KernelSpec::new(family, theta.to_vec(), var).unwrap();
                let mut w = LikelihoodWorkspace::new(family, &d.unit_points(), d.responses());
                let fast = w.lml(&theta, var, |_| noise).unwrap();
                // Profile the mean by brute force over the general path.
                let spec = NoiseSpec::Homoskedastic { variance: noise };
                let gls = crate::gp::GpFit::condition(&d, k.clone(), spec.clone(), None).unwrap().prior_mean();
                let slow = log_marginal_likelihood(&d, gls, &k, &spec).unwrap();
                assert!((fast - slow).abs() < 1e-8 * (1.0 + slow.abs()), "{fast} {slow}");
            }
        }
    }
}
