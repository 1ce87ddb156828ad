//! Derivative-free minimization (Nelder–Mead) and quasi-random start points.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions<T> {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below
    /// `f_tol * (1 + |f_best|)` ...
    pub f_tol: T,
    /// ... and every vertex is within `x_tol` of the best one.
    pub x_tol: T,
}

impl<T: Scalar> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            max_evals: 1000,
            f_tol: T::lit(1e-9),
            x_tol: T::lit(1e-7),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with initial simplex edges `step`.
///
/// Non-finite objective values are treated as `+∞`.
pub fn nelder_mead<T, F>(mut f: F, x0: &[T], step: &[T], opts: NelderMeadOptions<T>) -> Minimum<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = x[i] + step[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread_ok = (worst - best).abs() <= opts.f_tol * (T::one() + best.abs());
        let size_ok = simplex[1..].iter().all(|(x, _)| {
            x.iter()
                .zip(&simplex[0].0)
                .all(|(&a, &b)| (a - b).abs() <= opts.x_tol)
        });
        if best.is_finite() && spread_ok && size_ok {
            converged = true;
            break;
        }

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi;
            }
        }
        let nn = T::from_usize_lossy(n);
        centroid.iter_mut().for_each(|c| *c = *c / nn);

        let along = |t: T, from: &[T]| -> Vec<T> {
            centroid
                .iter()
                .zip(from)
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };
        let worst_x = simplex[n].0.clone();
        let xr = along(T::one(), &worst_x);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(two, &worst_x);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(half, &worst_x);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-half, &worst_x);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let bx = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, &b) in x.iter_mut().zip(&bx) {
                *xi = b + half * (*xi - b);
            }
            *v = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals,
        converged,
    }
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in `base`.
fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= b;
    }
    out
}

/// `count` points of a Halton sequence in `[0,1)^dim`, skipping the origin.
/// Each coordinate is rotated by a fixed irrational offset (Cranley–Patterson)
/// so that different dimensions do not line up.
pub fn halton_points(count: usize, dim: usize) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let shift = ((d as f64 + 1.0) * 0.618_033_988_749_895).fract();
                    (radical_inverse(i, PRIMES[d]) + shift).fract()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(
            f,
            &[-1.2, 1.0],
            &[0.5, 0.5],
            NelderMeadOptions {
                max_evals: 5000,
                f_tol: 1e-14,
                x_tol: 1e-9,
            },
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn tolerates_infinite_regions() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = nelder_mead(f, &[0.5], &[1.0], NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn halton_points_are_distinct_and_in_unit_cube() {
        let pts = halton_points(8, 3);
        assert_eq!(pts.len(), 8);
        for p in &pts {
            assert!(p.iter().all(|&u| (0.0..1.0).contains(&u)));
        }
        for i in 0..8 {
            for j in 0..i {
                assert_ne!(pts[i], pts[j]);
            }
        }
    }
}
