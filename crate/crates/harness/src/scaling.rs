//! Communication-scaling analysis over run records.
//!
//! For each `(protocol, adversary)` series the report tabulates the mean
//! honest communication `C(n)`, the normalized `C(n)/n^2`, and the doubling
//! ratios `C(2n)/C(n)`. A series is quadratic-consistent when every doubling
//! ratio stays at or below [`MAX_DOUBLING_RATIO`] and `C(n)/n^2` never
//! exceeds [`MAX_CN2_DRIFT`] times its value at the smallest size. The
//! thresholds leave room for lower-order terms at small sizes.

use crate::runner::RunRecord;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub const MAX_DOUBLING_RATIO: f64 = 4.5;
pub const MAX_CN2_DRIFT: f64 = 1.5;

/// Doublings a series must span before the verdict means anything.
pub const MIN_DOUBLINGS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("no records")]
    Empty,
    #[error("series {0} spans {1} doubling(s); need at least {MIN_DOUBLINGS}")]
    InsufficientData(String, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: u32,
    pub runs: usize,
    pub mean_cost: f64,
    pub cost_over_n2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doubling_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSeries {
    pub protocol: String,
    pub adversary: String,
    pub rows: Vec<ScalingRow>,
    pub quadratic_consistent: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub series: Vec<ScalingSeries>,
}

impl ScalingReport {
    pub fn all_consistent(&self) -> bool {
        self.series.iter().all(|s| s.quadratic_consistent)
    }
}

/// Builds the per-series scaling report. Records must span at least
/// [`MIN_DOUBLINGS`] consecutive doublings of `n` per series.
pub fn scaling_report(records: &[RunRecord]) -> Result<ScalingReport, ScalingError> {
    if records.is_empty() {
        return Err(ScalingError::Empty);
    }
    let mut grouped: BTreeMap<(String, String), BTreeMap<u32, Vec<u64>>> = BTreeMap::new();
    for r in records {
        grouped
            .entry((r.protocol.clone(), r.adversary.clone()))
            .or_default()
            .entry(r.n)
            .or_default()
            .push(r.total_kappa);
    }

    let mut series = Vec::new();
    for ((protocol, adversary), by_n) in grouped {
        let name = format!("{protocol}/{adversary}");
        let mut rows: Vec<ScalingRow> = Vec::new();
        for (&n, costs) in &by_n {
            let mean = costs.iter().sum::<u64>() as f64 / costs.len() as f64;
            rows.push(ScalingRow {
                n,
                runs: costs.len(),
                mean_cost: mean,
                cost_over_n2: mean / (n as f64 * n as f64),
                doubling_ratio: None,
            });
        }
        let mut doublings = 0;
        for i in 1..rows.len() {
            if rows[i].n == rows[i - 1].n * 2 {
                rows[i].doubling_ratio = Some(rows[i].mean_cost / rows[i - 1].mean_cost);
                doublings += 1;
            }
        }
        if doublings < MIN_DOUBLINGS {
            return Err(ScalingError::InsufficientData(name, doublings));
        }

        let mut failures = Vec::new();
        for row in &rows {
            if let Some(ratio) = row.doubling_ratio {
                if ratio > MAX_DOUBLING_RATIO {
                    failures.push(format!(
                        "C({})/C({}) = {ratio:.2} > {MAX_DOUBLING_RATIO}",
                        row.n,
                        row.n / 2
                    ));
                }
            }
        }
        let base = rows[0].cost_over_n2;
        for row in &rows[1..] {
            if row.cost_over_n2 > MAX_CN2_DRIFT * base {
                failures.push(format!(
                    "C({})/{}^2 = {:.2} exceeds {MAX_CN2_DRIFT}x its n={} value {:.2}",
                    row.n, row.n, row.cost_over_n2, rows[0].n, base
                ));
            }
        }
        series.push(ScalingSeries {
            protocol,
            adversary,
            quadratic_consistent: failures.is_empty(),
            rows,
            failures,
        });
    }
    Ok(ScalingReport { series })
}

impl fmt::Display for ScalingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.series {
            writeln!(f, "{} under {}:", s.protocol, s.adversary)?;
            writeln!(f, "  {:>6} {:>6} {:>14} {:>10} {:>8}", "n", "runs", "C(n)", "C/n^2", "ratio")?;
            for row in &s.rows {
                writeln!(
                    f,
                    "  {:>6} {:>6} {:>14.1} {:>10.2} {:>8}",
                    row.n,
                    row.runs,
                    row.mean_cost,
                    row.cost_over_n2,
                    row.doubling_ratio
                        .map(|r| format!("{r:.2}"))
                        .unwrap_or_else(|| "-".into())
                )?;
            }
            writeln!(
                f,
                "  verdict: {}",
                if s.quadratic_consistent {
                    "quadratic-consistent"
                } else {
                    "NOT quadratic-consistent"
                }
            )?;
            for failure in &s.failures {
                writeln!(f, "    {failure}")?;
            }
        }
        Ok(())
    }
}
