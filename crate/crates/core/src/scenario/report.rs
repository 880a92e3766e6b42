//! Writing batch results: per-scenario traces and KPI files, the
//! comparison table and the figures.

use std::path::{Path, PathBuf};

use super::compare::compare_scenarios;
use super::plot::{envelope, Chart, Style};
use super::ScenarioOutcome;
use crate::error::{Error, Result};
use crate::kpi::{efficiency_series, quantile, tracking_error, KpiConfig, KpiReport, Trace};

pub const BASELINE: &str = "only_hydro";

pub fn trace_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("trace_{label}.csv"))
}

pub fn kpi_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("kpi_{label}.json"))
}

/// Saves each scenario's trace and KPI report, then the comparison table
/// when the baseline is part of the batch. Returns the files written.
pub fn write_batch(dir: &Path, outcomes: &[ScenarioOutcome]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for o in outcomes {
        let label = o.mode.as_str();
        let t = trace_path(dir, label);
        o.trace.save(&t)?;
        let k = kpi_path(dir, label);
        o.report.save(&k)?;
        written.extend([t, k]);
    }
    let reports: Vec<KpiReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    if reports.iter().any(|r| r.label == BASELINE) {
        written.extend(write_comparison(dir, &reports, BASELINE)?);
    }
    Ok(written)
}

pub fn write_comparison(dir: &Path, reports: &[KpiReport], baseline: &str) -> Result<Vec<PathBuf>> {
    let c = compare_scenarios(reports, baseline)?;
    let csv = dir.join("comparison.csv");
    std::fs::write(&csv, c.to_csv()).map_err(|e| Error::io(&csv, e))?;
    let txt = dir.join("comparison.txt");
    std::fs::write(&txt, c.to_text()).map_err(|e| Error::io(&txt, e))?;
    Ok(vec![csv, txt])
}

/// Frequency, tracking-error, blade-torque CDF and efficiency figures for
/// a set of labelled traces.
pub fn write_plots(dir: &Path, runs: &[(String, Trace)], kpi: &KpiConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let Some((_, first)) = runs.first() else {
        return Ok(written);
    };
    let hours = |t: &Trace| t.time_s.iter().map(|s| s / 3600.0).collect::<Vec<f64>>();

    let path = dir.join("frequency.svg");
    Chart::new("Grid frequency", "time [h]", "frequency [Hz]")
        .with("f", envelope(&hours(first), &first.frequency_hz, 1500), Style::Line)
        .save(&path)?;
    written.push(path);

    let mut te_chart = Chart::new("Tracking error, 1-minute means", "time [h]", "TE [W]");
    for (label, t) in runs {
        let te = tracking_error(&t.p_set_w, &t.p_pcc_w)?;
        let dt = t.step()?;
        let bin = (kpi.averaging_s / dt).round().max(1.0) as usize;
        let pts = te
            .chunks_exact(bin)
            .enumerate()
            .map(|(i, c)| {
                let tm = t.time_s[i * bin + bin - 1] / 3600.0;
                (tm, c.iter().sum::<f64>() / bin as f64)
            })
            .collect();
        te_chart = te_chart.with(label, pts, Style::Line);
    }
    let path = dir.join("tracking_error.svg");
    te_chart.save(&path)?;
    written.push(path);

    let mut cdf_chart = Chart::new("CDF of blade-torque derivative", "|dRBT/dt| [N·m/s]", "F");
    for (label, t) in runs {
        let cdf = crate::kpi::rbt_derivative_cdf(&t.rbt_nm, t.step()?, kpi.rbt_absolute)?;
        // cut the long tail so the bulk of each curve stays readable
        let pts = (0..=400)
            .map(|i| {
                let q = 0.995 * i as f64 / 400.0;
                (quantile(&cdf, q), q)
            })
            .collect();
        cdf_chart = cdf_chart.with(label, pts, Style::Line);
    }
    let path = dir.join("rbt_cdf.svg");
    cdf_chart.save(&path)?;
    written.push(path);

    for (label, t) in runs {
        let e = efficiency_series(t, kpi)?;
        let stride = (t.len() / 1500).max(1);
        let (mut h, mut g) = (Vec::new(), Vec::new());
        for k in (0..t.len()).step_by(stride).filter(|&k| e.included[k]) {
            let p_kw = (t.p_pcc_w[k] - t.p_bess_w[k]) / 1000.0;
            h.push((p_kw, e.eta_h[k]));
            g.push((p_kw, e.eta_g[k]));
        }
        let path = dir.join(format!("efficiency_{label}.svg"));
        Chart::new(
            &format!("Efficiency vs hydro output, {label}"),
            "hydro output [kW]",
            "efficiency",
        )
        .with("hydraulic", h, Style::Dots)
        .with("global", g, Style::Dots)
        .save(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpi::{compute_report, TraceSample};
    use crate::scenario::ScenarioMode;

    fn trace(offset: f64) -> Trace {
        let mut t = Trace::default();
        for k in 0..240 {
            t.push(TraceSample {
                time_s: k as f64 + 1.0,
                frequency_hz: 50.0 + 0.01 * ((k as f64) * 0.1).sin(),
                p_set_w: 27_000.0,
                p_pcc_w: 27_000.0 - offset,
                p_bess_w: 0.0,
                gvo_deg: 10.0 + 0.01 * k as f64,
                rba_deg: 15.0,
                rbt_nm: 3.0 + 0.02 * k as f64,
                discharge_m3s: 0.4,
                head_m: 10.0,
                shaft_torque_nm: 180.0,
                speed_rev_s: 25.0,
                soc: 0.5,
            });
        }
        t
    }

    #[test]
    fn batch_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let kpi = KpiConfig::default();
        let outcomes: Vec<ScenarioOutcome> = [(ScenarioMode::OnlyHydro, 100.0), (ScenarioMode::VarSpeed, 50.0)]
            .into_iter()
            .map(|(mode, off)| {
                let trace = trace(off);
                let report = compute_report(&trace, &kpi, mode.as_str()).unwrap();
                ScenarioOutcome { mode, trace, report }
            })
            .collect();
        let files = write_batch(dir.path(), &outcomes).unwrap();
        assert_eq!(files.len(), 6);
        let text = std::fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
        assert!(text.contains("(-50.0%)"), "{text}");
        let runs: Vec<(String, Trace)> = outcomes.iter().map(|o| (o.mode.to_string(), o.trace.clone())).collect();
        let plots = write_plots(dir.path(), &runs, &kpi).unwrap();
        assert_eq!(plots.len(), 5);
        for p in plots {
            assert!(std::fs::read_to_string(p).unwrap().starts_with("<svg"));
        }
    }
}
