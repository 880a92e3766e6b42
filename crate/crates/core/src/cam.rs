//! CAM tables optimised over the efficiency surrogate, and the inverse
//! map from power set-point to guide-vane opening.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hillchart::DischargeModel;
use crate::physics::{hydraulic_power, rev_s_to_rpm, rpm_to_rev_s, speed_coefficient};
use crate::search::bracketed_max;
use crate::surrogate::EfficiencySurrogate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CamMode {
    /// Fixed speed, control column is the blade angle in degrees.
    Kaplan,
    /// Fixed blades, control column is the speed in rev/s.
    VarSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamRow {
    pub alpha_deg: f64,
    pub control: f64,
    pub eta_pred: f64,
    pub p_pred_w: f64,
}

/// Search settings shared by both CAM builders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CamGrid {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub beta_coarse_deg: f64,
    pub beta_tol_deg: f64,
    pub rpm_min: f64,
    pub rpm_max: f64,
    pub rpm_coarse: f64,
    pub rpm_tol: f64,
}

impl Default for CamGrid {
    fn default() -> Self {
        Self {
            alpha_min: 0.0,
            alpha_max: 30.0,
            alpha_step: 0.5,
            beta_coarse_deg: 0.5,
            beta_tol_deg: 0.01,
            rpm_min: 500.0,
            rpm_max: 1500.0,
            rpm_coarse: 5.0,
            rpm_tol: 0.1,
        }
    }
}

impl CamGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_step > 0.0 && self.alpha_min <= self.alpha_max) {
            return Err(Error::Config("CAM alpha grid is empty".into()));
        }
        if !(self.beta_coarse_deg > 0.0 && self.beta_tol_deg > 0.0) {
            return Err(Error::Config("CAM blade search steps must be positive".into()));
        }
        if !(self.rpm_coarse > 0.0 && self.rpm_tol > 0.0 && self.rpm_min > 0.0) {
            return Err(Error::Config("CAM speed search steps must be positive".into()));
        }
        if !(self.rpm_min <= self.rpm_max) {
            return Err(Error::Config("CAM speed range is empty".into()));
        }
        Ok(())
    }

    pub fn alphas(&self) -> Vec<f64> {
        let n = ((self.alpha_max - self.alpha_min) / self.alpha_step + 1e-9).floor() as usize;
        let mut out: Vec<f64> = (0..=n).map(|i| self.alpha_min + i as f64 * self.alpha_step).collect();
        if out.last().is_some_and(|&a| self.alpha_max - a > 1e-9) {
            out.push(self.alpha_max);
        }
        out
    }
}

/// Lookup table from guide-vane opening to the optimal second control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamTable {
    pub mode: CamMode,
    pub head_m: f64,
    /// Blade angle of the fixed-blade runner, deg.
    pub fixed_beta_deg: Option<f64>,
    /// Speed of the fixed-speed unit, rev/s.
    pub fixed_n: Option<f64>,
    pub rows: Vec<CamRow>,
}

fn row_power(eta: f64, discharge: &dyn DischargeModel, alpha: f64, beta: f64, n_ed: f64, head: f64) -> Result<f64> {
    let q = discharge.discharge(alpha, beta, n_ed, head)?;
    Ok(eta.max(0.0) * hydraulic_power(q, head))
}

fn check_monotone(rows: &[CamRow]) -> Result<()> {
    for w in rows.windows(2) {
        if w[1].p_pred_w < w[0].p_pred_w {
            return Err(Error::Cam(format!(
                "predicted power decreases between GVO {} and {} deg ({} -> {} W)",
                w[0].alpha_deg, w[1].alpha_deg, w[0].p_pred_w, w[1].p_pred_w
            )));
        }
    }
    Ok(())
}

/// Optimal blade angle per opening at fixed speed `n_fixed` (rev/s).
pub fn build_kaplan_cam(
    model: &EfficiencySurrogate,
    discharge: &dyn DischargeModel,
    head: f64,
    n_fixed: f64,
    grid: &CamGrid,
) -> Result<CamTable> {
    grid.validate()?;
    if !(head > 0.0) {
        return Err(Error::Domain(format!("head must be positive, got {head}")));
    }
    let n_ed = ned(n_fixed, head, discharge)?;
    let [b_lo, b_hi] = model.input_ranges()[1];
    let mut rows = Vec::new();
    for alpha in grid.alphas() {
        let f = |b: f64| model.eval(alpha, b, n_ed);
        let (beta, eta) = bracketed_max(&f, b_lo, b_hi, grid.beta_coarse_deg, grid.beta_tol_deg)
            .ok_or_else(|| Error::Cam("empty feasible blade-angle range".into()))?;
        rows.push(CamRow {
            alpha_deg: alpha,
            control: beta,
            eta_pred: eta,
            p_pred_w: row_power(eta, discharge, alpha, beta, n_ed, head)?,
        });
    }
    check_monotone(&rows)?;
    Ok(CamTable {
        mode: CamMode::Kaplan,
        head_m: head,
        fixed_beta_deg: None,
        fixed_n: Some(n_fixed),
        rows,
    })
}

/// Optimal speed per opening for the fixed-blade runner at `beta_fixed`.
pub fn build_varspeed_cam(
    model: &EfficiencySurrogate,
    discharge: &dyn DischargeModel,
    head: f64,
    beta_fixed: f64,
    grid: &CamGrid,
) -> Result<CamTable> {
    grid.validate()?;
    if !(head > 0.0) {
        return Err(Error::Domain(format!("head must be positive, got {head}")));
    }
    let mut rows = Vec::new();
    for alpha in grid.alphas() {
        let eval_rpm = |rpm: f64| {
            ned(rpm_to_rev_s(rpm), head, discharge)
                .map(|n_ed| model.eval(alpha, beta_fixed, n_ed))
                .unwrap_or(f64::NEG_INFINITY)
        };
        let (rpm, eta) = bracketed_max(&eval_rpm, grid.rpm_min, grid.rpm_max, grid.rpm_coarse, grid.rpm_tol)
            .ok_or_else(|| Error::Cam("empty feasible speed range".into()))?;
        let n = rpm_to_rev_s(rpm);
        rows.push(CamRow {
            alpha_deg: alpha,
            control: n,
            eta_pred: eta,
            p_pred_w: row_power(eta, discharge, alpha, beta_fixed, ned(n, head, discharge)?, head)?,
        });
    }
    check_monotone(&rows)?;
    Ok(CamTable {
        mode: CamMode::VarSpeed,
        head_m: head,
        fixed_beta_deg: Some(beta_fixed),
        fixed_n: None,
        rows,
    })
}

fn ned(n: f64, head: f64, discharge: &dyn DischargeModel) -> Result<f64> {
    speed_coefficient(n, discharge.diameter_m(), head)
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

impl CamTable {
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Cam("table has no rows".into()));
        }
        for w in self.rows.windows(2) {
            if !(w[1].alpha_deg > w[0].alpha_deg) {
                return Err(Error::Cam("GVO column must be strictly increasing".into()));
            }
        }
        check_monotone(&self.rows)
    }

    pub fn alpha_range(&self) -> (f64, f64) {
        (self.rows[0].alpha_deg, self.rows[self.rows.len() - 1].alpha_deg)
    }

    /// Control value at `alpha` by linear interpolation, held at the ends.
    pub fn control_at(&self, alpha: f64) -> f64 {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.alpha_deg).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.control).collect();
        interp(&xs, &ys, alpha)
    }

    pub fn p_max(&self) -> f64 {
        self.rows[self.rows.len() - 1].p_pred_w
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<cam csv>", e))?;
        Ok(())
    }

    pub fn metadata(&self) -> CamMetadata {
        CamMetadata {
            schema_version: 1,
            mode: self.mode,
            head_m: self.head_m,
            fixed_beta_deg: self.fixed_beta_deg,
            fixed_n: self.fixed_n,
            control_unit: match self.mode {
                CamMode::Kaplan => "deg".into(),
                CamMode::VarSpeed => "rev/s".into(),
            },
            rows: self.rows.len(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json_path = dir.join(format!("{stem}.json"));
        let meta = serde_json::to_string_pretty(&self.metadata())?;
        std::fs::write(&json_path, meta).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json_path = dir.join(format!("{stem}.json"));
        let meta: CamMetadata =
            serde_json::from_str(&std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let rows = read_cam_csv(f, &csv_path.display().to_string())?;
        let table = CamTable {
            mode: meta.mode,
            head_m: meta.head_m,
            fixed_beta_deg: meta.fixed_beta_deg,
            fixed_n: meta.fixed_n,
            rows,
        };
        table.validate()?;
        Ok(table)
    }

    /// Speed column of a variable-speed table in min⁻¹.
    pub fn speeds_rpm(&self) -> Vec<f64> {
        self.rows.iter().map(|r| rev_s_to_rpm(r.control)).collect()
    }
}

fn read_cam_csv<R: Read>(input: R, label: &str) -> Result<Vec<CamRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: CamRow = rec.map_err(|e| Error::Parse {
            path: label.to_string(),
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamMetadata {
    pub schema_version: u32,
    pub mode: CamMode,
    pub head_m: f64,
    pub fixed_beta_deg: Option<f64>,
    pub fixed_n: Option<f64>,
    pub control_unit: String,
    pub rows: usize,
}

/// Inverse of the predicted power column.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointMap {
    powers: Vec<f64>,
    alphas: Vec<f64>,
}

impl SetpointMap {
    pub fn from_table(table: &CamTable) -> Result<Self> {
        table.validate()?;
        Ok(Self {
            powers: table.rows.iter().map(|r| r.p_pred_w).collect(),
            alphas: table.rows.iter().map(|r| r.alpha_deg).collect(),
        })
    }

    pub fn p_max(&self) -> f64 {
        self.powers[self.powers.len() - 1]
    }

    /// Opening predicted to deliver `p` (W); the flag is set when `p` lies
    /// outside the table and was clamped. On flat stretches the smallest
    /// opening reaching `p` is returned.
    pub fn alpha_for(&self, p: f64) -> (f64, bool) {
        let last = self.powers.len() - 1;
        if p <= self.powers[0] {
            return (self.alphas[0], p < self.powers[0]);
        }
        if p >= self.powers[last] {
            return (self.alphas[last], p > self.powers[last]);
        }
        // first row with power >= p
        let j = self.powers.partition_point(|&v| v < p);
        let i = j - 1;
        let (p0, p1) = (self.powers[i], self.powers[j]);
        if p1 == p0 {
            return (self.alphas[i], false);
        }
        let t = (p - p0) / (p1 - p0);
        (self.alphas[i] + t * (self.alphas[j] - self.alphas[i]), false)
    }

    /// Predicted power at `alpha` (forward map of the same table).
    pub fn power_at(&self, alpha: f64) -> f64 {
        interp(&self.alphas, &self.powers, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(powers: &[f64]) -> CamTable {
        CamTable {
            mode: CamMode::Kaplan,
            head_m: 10.0,
            fixed_beta_deg: None,
            fixed_n: Some(25.0),
            rows: powers
                .iter()
                .enumerate()
                .map(|(i, &p)| CamRow {
                    alpha_deg: i as f64,
                    control: 10.0 + i as f64,
                    eta_pred: 0.9,
                    p_pred_w: p,
                })
                .collect(),
        }
    }

    #[test]
    fn setpoint_map_nodes_and_interpolation() {
        let m = SetpointMap::from_table(&table(&[0.0, 1000.0, 3000.0, 6000.0])).unwrap();
        assert_eq!(m.alpha_for(0.0), (0.0, false));
        assert_eq!(m.alpha_for(3000.0), (2.0, false));
        assert_eq!(m.alpha_for(2000.0), (1.5, false));
        assert_eq!(m.alpha_for(7000.0), (3.0, true));
        assert_eq!(m.alpha_for(-5.0), (0.0, true));
    }

    #[test]
    fn flat_stretch_returns_smallest_opening() {
        let m = SetpointMap::from_table(&table(&[0.0, 0.0, 0.0, 500.0])).unwrap();
        assert_eq!(m.alpha_for(0.0), (0.0, false));
        assert_eq!(m.alpha_for(250.0), (2.5, false));
    }

    #[test]
    fn non_monotone_power_is_rejected() {
        assert!(matches!(
            SetpointMap::from_table(&table(&[0.0, 2.0, 1.0])),
            Err(Error::Cam(_))
        ));
    }

    #[test]
    fn control_interpolation() {
        let t = table(&[0.0, 1.0, 2.0]);
        assert_eq!(t.control_at(0.5), 10.5);
        assert_eq!(t.control_at(-1.0), 10.0);
        assert_eq!(t.control_at(9.0), 12.0);
    }

    #[test]
    fn grid_alphas_include_end() {
        let g = CamGrid {
            alpha_max: 1.2,
            alpha_step: 0.5,
            ..Default::default()
        };
        assert_eq!(g.alphas(), vec![0.0, 0.5, 1.0, 1.2]);
        assert_eq!(CamGrid::default().alphas().len(), 61);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(&[0.0, 1000.0, 3000.0]);
        t.save(dir.path(), "cam").unwrap();
        assert_eq!(CamTable::load(dir.path(), "cam").unwrap(), t);
        let head = std::fs::read_to_string(dir.path().join("cam.csv")).unwrap();
        assert!(head.starts_with("alpha_deg,control,eta_pred,p_pred_w\n"));
    }
}
