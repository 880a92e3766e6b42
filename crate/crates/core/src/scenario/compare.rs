//! Side-by-side KPI table with percent changes against a baseline scenario.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kpi::{KpiReport, METRICS};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    /// Input reports in input order, with `percent_deltas` filled in.
    pub reports: Vec<KpiReport>,
}

/// Absolute values plus percent deltas against the report labelled `baseline`.
pub fn compare_scenarios(reports: &[KpiReport], baseline: &str) -> Result<Comparison> {
    let base = reports
        .iter()
        .find(|r| r.label == baseline)
        .ok_or_else(|| Error::MissingBaseline(baseline.to_string()))?
        .clone();
    let reports = reports
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.percent_deltas = Some(r.deltas_against(&base));
            r
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        reports,
    })
}

fn delta(r: &KpiReport, key: &str) -> Option<f64> {
    r.percent_deltas.as_ref().and_then(|d| d.get(key).copied().flatten())
}

fn fmt_value(key: &str, v: f64) -> String {
    match key {
        "nom_gvo" | "nom_rba" | "samples" => format!("{v:.0}"),
        "mean_eta_h" | "mean_eta_g" => format!("{v:.4}"),
        _ => format!("{v:.2}"),
    }
}

impl Comparison {
    /// Long format: `mode,metric,value,percent_vs_baseline`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,metric,value,percent_vs_baseline\n");
        for r in &self.reports {
            for key in METRICS {
                let v = r.metric(key).unwrap_or(f64::NAN);
                let d = delta(r, key).map(|d| d.to_string()).unwrap_or_default();
                let _ = writeln!(s, "{},{key},{v},{d}", r.label);
            }
        }
        s
    }

    /// Fixed-width table, one column per scenario.
    pub fn to_text(&self) -> String {
        let width = 24;
        let mut s = String::new();
        let _ = write!(s, "{:<20}", "metric");
        for r in &self.reports {
            let _ = write!(s, "{:>width$}", r.label);
        }
        s.push('\n');
        for key in METRICS {
            let _ = write!(s, "{key:<20}");
            for r in &self.reports {
                let v = fmt_value(key, r.metric(key).unwrap_or(f64::NAN));
                let cell = if r.label == self.baseline {
                    v
                } else {
                    match delta(r, key) {
                        Some(d) => format!("{v} ({d:+.1}%)"),
                        None => format!("{v} (n/a)"),
                    }
                };
                let _ = write!(s, "{cell:>width$}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "baseline: {}", self.baseline);
        s
    }
}
