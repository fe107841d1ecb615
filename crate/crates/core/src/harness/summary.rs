//! Aggregation of result CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Method, Precoder, ResultRow};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryLine {
    pub sweep_value: Option<f64>,
    pub method: Method,
    pub precoder: Precoder,
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean; zero for a single row.
    pub std_error: f64,
    /// Mean divided by the oracle mean for the same sweep value and precoder.
    pub oracle_ratio: Option<f64>,
}

/// Key that sorts `None` first and floats by bit pattern of their order.
fn sweep_key(v: Option<f64>) -> (bool, i64) {
    match v {
        None => (false, 0),
        Some(x) => {
            let bits = x.to_bits() as i64;
            (true, if bits < 0 { bits ^ i64::MAX } else { bits })
        }
    }
}

pub fn summarize_rows(rows: &[ResultRow]) -> Vec<SummaryLine> {
    let mut groups: BTreeMap<((bool, i64), Method, Precoder), (Option<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        groups
            .entry((sweep_key(r.sweep_value), r.method, r.precoder))
            .or_insert_with(|| (r.sweep_value, Vec::new()))
            .1
            .push(r.sum_throughput);
    }
    let means: BTreeMap<_, f64> = groups
        .iter()
        .map(|(k, (_, v))| (*k, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    groups
        .iter()
        .map(|(key, (sweep_value, values))| {
            let n = values.len();
            let mean = means[key];
            let std_error = if n > 1 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            let oracle_ratio = means
                .get(&(key.0, Method::Oracle, key.2))
                .filter(|m| **m > 0.0)
                .map(|m| mean / m);
            SummaryLine {
                sweep_value: *sweep_value,
                method: key.1,
                precoder: key.2,
                count: n,
                mean,
                std_error,
                oracle_ratio,
            }
        })
        .collect()
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Malformed(e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::Malformed(e.to_string())))
        .collect()
}

/// Text report over a result CSV; an empty file gives an empty report.
pub fn summarize(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(String::new());
    }
    let lines = summarize_rows(&read_rows(path)?);
    let mut out = String::new();
    if lines.is_empty() {
        return Ok(out);
    }
    let _ = writeln!(
        out,
        "{:>10}  {:<24} {:<13} {:>5} {:>12} {:>10} {:>8}",
        "sweep", "method", "precoder", "n", "mean", "stderr", "/oracle"
    );
    for l in &lines {
        let sweep = l.sweep_value.map_or("-".to_string(), |v| v.to_string());
        let ratio = l.oracle_ratio.map_or("-".to_string(), |r| format!("{r:.4}"));
        let _ = writeln!(
            out,
            "{:>10}  {:<24} {:<13} {:>5} {:>12.4} {:>10.4} {:>8}",
            sweep, l.method, l.precoder, l.count, l.mean, l.std_error, ratio
        );
    }
    Ok(out)
}
