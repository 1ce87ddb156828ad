use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use super::{HarnessError, ReplicateResult, SummaryRow};

/// One row per replicate, method and checkpoint.
pub fn write_results_csv(path: &Path, results: &[ReplicateResult]) -> Result<(), HarnessError> {
    let dim = results
        .iter()
        .flat_map(|r| r.checkpoints.iter().map(|c| c.point.len()))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["replicate", "seed", "method", "added"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=dim).map(|d| format!("psi{d}")));
    header.extend(
        ["value", "true_value", "evaluations", "failed_points"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in results {
        for c in &r.checkpoints {
            let mut row = vec![
                r.replicate.to_string(),
                r.seed.to_string(),
                r.method.to_string(),
                c.added.to_string(),
            ];
            row.extend((0..dim).map(|d| c.point.get(d).map_or(String::new(), |v| v.to_string())));
            row.push(c.value.to_string());
            row.push(c.true_value.map_or(String::new(), |v| v.to_string()));
            row.push(r.evaluations.to_string());
            row.push(r.failed_points.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "added", "quantity", "count", "mean", "sd", "median", "q25", "q75", "iqr"])?;
    for r in rows {
        let s = &r.stats;
        w.write_record([
            r.method.to_string(),
            r.added.to_string(),
            r.quantity.clone(),
            s.count.to_string(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.median.to_string(),
            s.q25.to_string(),
            s.q75.to_string(),
            s.iqr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}
