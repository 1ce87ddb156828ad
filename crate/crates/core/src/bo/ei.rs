use crate::scalar::{normal_cdf, normal_pdf, Scalar};

/// Expected improvement over `baseline` for a normal predictive with the
/// given mean and variance. Zero when the variance is zero.
pub fn expected_improvement<T: Scalar>(mean: T, variance: T, baseline: T) -> T {
    if !(variance > T::zero()) || !variance.is_finite() || !mean.is_finite() {
        return T::zero();
    }
    let sd = variance.sqrt();
    let d = mean - baseline;
    let z = d / sd;
    (d * normal_cdf(z) + sd * normal_pdf(z)).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_cases() {
        assert_eq!(expected_improvement(5.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(-5.0, 0.0, 1.0), 0.0);
        let at_zero = expected_improvement(2.0, 1.0, 2.0);
        assert!((at_zero - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((at_zero - 0.39894).abs() < 1e-5);
        assert!((expected_improvement(1.0_f64, 1e-18, 0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn increases_with_sd_at_the_baseline() {
        let mut last = 0.0;
        for k in 1..50 {
            let sd = 0.01 * k as f64;
            let ei = expected_improvement(0.3, sd * sd, 0.3);
            assert!(ei > last);
            last = ei;
        }
    }

    proptest! {
        #[test]
        fn nonnegative(mean in -1e3f64..1e3, sd in 0.0f64..1e2, base in -1e3f64..1e3) {
            prop_assert!(expected_improvement(mean, sd * sd, base) >= 0.0);
        }

        #[test]
        fn monotone_in_sd(mean in -5f64..5.0, base in -5f64..5.0, a in 1e-3f64..10.0, b in 1e-3f64..10.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(expected_improvement(mean, hi * hi, base) >= expected_improvement(mean, lo * lo, base) - 1e-12);
        }
    }
}
