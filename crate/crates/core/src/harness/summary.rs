use serde::Serialize;

use super::{Method, ReplicateResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1`), zero for a single value.
    pub sd: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n − 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let q25 = quantile(&sorted, 0.25);
    let q75 = quantile(&sorted, 0.75);
    Some(SummaryStats {
        count: n,
        mean,
        sd,
        median: quantile(&sorted, 0.5),
        q25,
        q75,
        iqr: q75 - q25,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub added: usize,
    /// `psi1`, `psi2`, ..., `value` or `true_value`.
    pub quantity: String,
    pub stats: SummaryStats,
}

/// Statistics per method, checkpoint and quantity, in a fixed order
/// independent of the order of `results`.
pub fn summarize(results: &[ReplicateResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize, usize)> = results
        .iter()
        .flat_map(|r| r.checkpoints.iter().map(move |c| (r.method, c.added, c.point.len())))
        .collect();
    keys.sort();
    keys.dedup();
    let mut rows = Vec::new();
    for (method, added, dim) in keys {
        let cps: Vec<_> = results
            .iter()
            .filter(|r| r.method == method)
            .flat_map(|r| r.checkpoints.iter().filter(|c| c.added == added && c.point.len() == dim))
            .collect();
        let mut push = |quantity: String, values: Vec<f64>| {
            if let Some(stats) = describe(&values) {
                rows.push(SummaryRow {
                    method,
                    added,
                    quantity,
                    stats,
                });
            }
        };
        for d in 0..dim {
            push(format!("psi{}", d + 1), cps.iter().map(|c| c.point[d]).collect());
        }
        push("value".into(), cps.iter().map(|c| c.value).collect());
        push("true_value".into(), cps.iter().filter_map(|c| c.true_value).collect());
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_interpolation_quantiles() {
        let s = describe(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.iqr, 1.5);
        let one = describe(&[7.0]).unwrap();
        assert_eq!((one.sd, one.iqr, one.median, one.mean), (0.0, 0.0, 7.0, 7.0));
        let c = describe(&[3.0; 5]).unwrap();
        assert_eq!((c.mean, c.median), (3.0, 3.0));
        assert!(describe(&[]).is_none());
    }
}
