//! Key performance indicators computed from logged traces: FCR tracking
//! quality, servo wear and efficiencies.
//!
//! Everything here is a pure function of an immutable trace.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{angular_speed, hydraulic_power, rev_s_to_rpm, rpm_to_rev_s};

pub const SCHEMA_VERSION: u32 = 1;

/// Logged channels at a uniform rate. Speed is in rev/s.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub time_s: Vec<f64>,
    pub frequency_hz: Vec<f64>,
    pub p_set_w: Vec<f64>,
    /// Active power at the PCC.
    pub p_pcc_w: Vec<f64>,
    pub p_bess_w: Vec<f64>,
    pub gvo_deg: Vec<f64>,
    pub rba_deg: Vec<f64>,
    pub rbt_nm: Vec<f64>,
    pub discharge_m3s: Vec<f64>,
    pub head_m: Vec<f64>,
    pub shaft_torque_nm: Vec<f64>,
    pub speed_rev_s: Vec<f64>,
    pub soc: Vec<f64>,
}

/// One CSV row. Column names follow the rig's measurement list.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct TraceRow {
    time_s: f64,
    frequency_hz: f64,
    p_set_w: f64,
    active_power_w: f64,
    bess_power_w: f64,
    gvo_deg: f64,
    rba_deg: f64,
    rbt_nm: f64,
    discharge_m3s: f64,
    head_m: f64,
    shaft_torque_nm: f64,
    turbine_speed_rpm: f64,
    soc: f64,
}

/// Values of every channel at one logging instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time_s: f64,
    pub frequency_hz: f64,
    pub p_set_w: f64,
    pub p_pcc_w: f64,
    pub p_bess_w: f64,
    pub gvo_deg: f64,
    pub rba_deg: f64,
    pub rbt_nm: f64,
    pub discharge_m3s: f64,
    pub head_m: f64,
    pub shaft_torque_nm: f64,
    pub speed_rev_s: f64,
    pub soc: f64,
}

impl Trace {
    pub fn with_capacity(n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            time_s: v(),
            frequency_hz: v(),
            p_set_w: v(),
            p_pcc_w: v(),
            p_bess_w: v(),
            gvo_deg: v(),
            rba_deg: v(),
            rbt_nm: v(),
            discharge_m3s: v(),
            head_m: v(),
            shaft_torque_nm: v(),
            speed_rev_s: v(),
            soc: v(),
        }
    }

    pub fn push(&mut self, s: TraceSample) {
        self.time_s.push(s.time_s);
        self.frequency_hz.push(s.frequency_hz);
        self.p_set_w.push(s.p_set_w);
        self.p_pcc_w.push(s.p_pcc_w);
        self.p_bess_w.push(s.p_bess_w);
        self.gvo_deg.push(s.gvo_deg);
        self.rba_deg.push(s.rba_deg);
        self.rbt_nm.push(s.rbt_nm);
        self.discharge_m3s.push(s.discharge_m3s);
        self.head_m.push(s.head_m);
        self.shaft_torque_nm.push(s.shaft_torque_nm);
        self.speed_rev_s.push(s.speed_rev_s);
        self.soc.push(s.soc);
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    fn columns(&self) -> [&Vec<f64>; 13] {
        [
            &self.time_s,
            &self.frequency_hz,
            &self.p_set_w,
            &self.p_pcc_w,
            &self.p_bess_w,
            &self.gvo_deg,
            &self.rba_deg,
            &self.rbt_nm,
            &self.discharge_m3s,
            &self.head_m,
            &self.shaft_torque_nm,
            &self.speed_rev_s,
            &self.soc,
        ]
    }

    /// Logging step, s. Checks that all channels have equal length and the
    /// time base is uniform.
    pub fn step(&self) -> Result<f64> {
        let n = self.len();
        for col in self.columns() {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    left: col.len(),
                    right: n,
                });
            }
        }
        if n < 2 {
            return Err(Error::Empty("trace needs at least two samples".into()));
        }
        let dt = self.time_s[1] - self.time_s[0];
        if !(dt > 0.0) {
            return Err(Error::Domain("trace time must increase".into()));
        }
        for (k, w) in self.time_s.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Domain(format!("trace time step changes at sample {}", k + 1)));
            }
        }
        Ok(dt)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for k in 0..self.len() {
            w.serialize(TraceRow {
                time_s: self.time_s[k],
                frequency_hz: self.frequency_hz[k],
                p_set_w: self.p_set_w[k],
                active_power_w: self.p_pcc_w[k],
                bess_power_w: self.p_bess_w[k],
                gvo_deg: self.gvo_deg[k],
                rba_deg: self.rba_deg[k],
                rbt_nm: self.rbt_nm[k],
                discharge_m3s: self.discharge_m3s[k],
                head_m: self.head_m[k],
                shaft_torque_nm: self.shaft_torque_nm[k],
                turbine_speed_rpm: rev_s_to_rpm(self.speed_rev_s[k]),
                soc: self.soc[k],
            })?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut t = Trace::default();
        for row in r.deserialize() {
            let row: TraceRow = row?;
            t.push(TraceSample {
                time_s: row.time_s,
                frequency_hz: row.frequency_hz,
                p_set_w: row.p_set_w,
                p_pcc_w: row.active_power_w,
                p_bess_w: row.bess_power_w,
                gvo_deg: row.gvo_deg,
                rba_deg: row.rba_deg,
                rbt_nm: row.rbt_nm,
                discharge_m3s: row.discharge_m3s,
                head_m: row.head_m,
                shaft_torque_nm: row.shaft_torque_nm,
                speed_rev_s: rpm_to_rev_s(row.turbine_speed_rpm),
                soc: row.soc,
            });
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Counting thresholds and windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KpiConfig {
    /// Bin length for the tracking-error RMS, s.
    pub averaging_s: f64,
    /// Samples before this time are left out of the tracking error, s.
    pub warmup_s: f64,
    /// Per-sample increments below this are ignored by the mileage, deg.
    pub eps_noise_deg: f64,
    /// Minimum increment that counts as motion, deg.
    pub eps_move_deg: f64,
    /// Stillness needed before motion counts as a new movement, s.
    pub rest_s: f64,
    /// Use |dT/dt| for the blade-torque CDF.
    pub rbt_absolute: bool,
    /// Reference hydraulic power for the low-load exclusion, W.
    pub rated_hydraulic_power_w: f64,
    /// Samples with p_h below this share of the reference are excluded.
    pub min_power_share: f64,
}

impl Default for KpiConfig {
    fn default() -> Self {
        Self {
            averaging_s: 60.0,
            warmup_s: 0.0,
            eps_noise_deg: 0.005,
            eps_move_deg: 0.01,
            rest_s: 1.0,
            rbt_absolute: true,
            // 1.4 m³/s at 10 m
            rated_hydraulic_power_w: 137_340.0,
            min_power_share: 0.01,
        }
    }
}

impl KpiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.averaging_s > 0.0) {
            return Err(Error::Config("kpi averaging_s must be positive".into()));
        }
        if !(self.warmup_s >= 0.0) {
            return Err(Error::Config("kpi warmup_s must be non-negative".into()));
        }
        if !(self.eps_noise_deg >= 0.0 && self.eps_move_deg >= 0.0 && self.rest_s >= 0.0) {
            return Err(Error::Config("kpi thresholds must be non-negative".into()));
        }
        if !(self.rated_hydraulic_power_w > 0.0) {
            return Err(Error::Config("kpi rated_hydraulic_power_w must be positive".into()));
        }
        Ok(())
    }
}

/// `TE_k = p_set_k − p_pcc_k`; underproduction is positive.
pub fn tracking_error(p_set: &[f64], p_pcc: &[f64]) -> Result<Vec<f64>> {
    if p_set.len() != p_pcc.len() {
        return Err(Error::LengthMismatch {
            left: p_set.len(),
            right: p_pcc.len(),
        });
    }
    Ok(p_set.iter().zip(p_pcc).map(|(s, p)| s - p).collect())
}

/// RMS of the bin means of `te[k1..k2]`, `bin` samples per bin. A trailing
/// partial bin is dropped.
pub fn rms_te(te: &[f64], window: (usize, usize), bin: usize) -> Result<f64> {
    let (k1, k2) = window;
    if k2 > te.len() || k1 > k2 {
        return Err(Error::Domain(format!(
            "window {k1}..{k2} outside a trace of {} samples",
            te.len()
        )));
    }
    if bin == 0 {
        return Err(Error::Domain("bin length must be positive".into()));
    }
    let bins = (k2 - k1) / bin;
    if bins == 0 {
        return Err(Error::Empty(format!(
            "window of {} samples holds no full bin of {bin}",
            k2 - k1
        )));
    }
    let sum_sq: f64 = te[k1..k1 + bins * bin]
        .chunks_exact(bin)
        .map(|c| {
            let m = c.iter().sum::<f64>() / bin as f64;
            m * m
        })
        .sum();
    Ok((sum_sq / bins as f64).sqrt())
}

/// Total variation, ignoring increments smaller than `eps`.
pub fn mileage(position: &[f64], eps: f64) -> f64 {
    position
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|d| *d >= eps)
        .fold(0.0, |acc, d| acc + d)
}

/// Movement onsets plus direction reversals.
///
/// A movement starts when an increment exceeds `eps_move` after at least
/// `rest_s` of stillness; the start of the trace counts as stillness. While
/// moving, an increment above `eps_move` against the current direction is a
/// reversal and counts as a new movement.
pub fn number_of_movements(position: &[f64], dt: f64, eps_move: f64, rest_s: f64) -> u64 {
    let mut count = 0;
    let mut still = f64::INFINITY;
    let mut direction = 0.0;
    for w in position.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= eps_move {
            still += dt;
            continue;
        }
        let sign = d.signum();
        if still >= rest_s - 1e-9 || sign != direction {
            count += 1;
        }
        direction = sign;
        still = 0.0;
    }
    count
}

/// Finite-difference derivative, central inside and one-sided at the ends.
pub fn derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (x[1] - x[0]) / dt
            } else if k == n - 1 {
                (x[n - 1] - x[n - 2]) / dt
            } else {
                (x[k + 1] - x[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Sorted sample set of the blade-torque derivative, N·m/s.
pub fn rbt_derivative_cdf(t_blade: &[f64], dt: f64, absolute: bool) -> Result<Vec<f64>> {
    if t_blade.len() < 2 {
        return Err(Error::Empty("blade torque needs at least two samples".into()));
    }
    let mut d = derivative(t_blade, dt);
    if absolute {
        d.iter_mut().for_each(|v| *v = v.abs());
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Linear-interpolated quantile of a sorted sample, `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let i = h.floor() as usize;
            if i + 1 >= n {
                return sorted[n - 1];
            }
            sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
        }
    }
}

/// Empirical CDF value `P(X ≤ x)`.
pub fn cdf_at(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EfficiencySeries {
    pub eta_h: Vec<f64>,
    pub eta_g: Vec<f64>,
    /// Sample carries enough hydraulic power to count in the means.
    pub included: Vec<bool>,
}

impl EfficiencySeries {
    pub fn means(&self) -> (f64, f64) {
        let mut n = 0usize;
        let (mut h, mut g) = (0.0, 0.0);
        for k in 0..self.eta_h.len() {
            if self.included[k] {
                n += 1;
                h += self.eta_h[k];
                g += self.eta_g[k];
            }
        }
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        (h / n as f64, g / n as f64)
    }
}

/// Per-sample hydraulic and global efficiency. Shaft power comes from the
/// measured torque and speed, hydraulic power from discharge and head.
pub fn efficiency_series(trace: &Trace, cfg: &KpiConfig) -> Result<EfficiencySeries> {
    trace.step()?;
    let threshold = cfg.min_power_share * cfg.rated_hydraulic_power_w;
    let mut out = EfficiencySeries::default();
    for k in 0..trace.len() {
        let p_h = hydraulic_power(trace.discharge_m3s[k], trace.head_m[k]);
        let p_m = trace.shaft_torque_nm[k] * angular_speed(trace.speed_rev_s[k]);
        let p_hydro = trace.p_pcc_w[k] - trace.p_bess_w[k];
        if p_h > 0.0 {
            out.eta_h.push(p_m / p_h);
            out.eta_g.push(p_hydro / p_h);
        } else {
            out.eta_h.push(0.0);
            out.eta_g.push(0.0);
        }
        out.included.push(p_h > 0.0 && p_h >= threshold);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpiReport {
    pub schema_version: u32,
    pub label: String,
    pub samples: usize,
    pub rms_te_w: f64,
    pub mileage_gvo_deg: f64,
    pub mileage_rba_deg: f64,
    pub nom_gvo: u64,
    pub nom_rba: u64,
    pub rbt_derivative_p95: f64,
    /// Sorted |dT_blade/dt| samples, N·m/s.
    pub rbt_derivative_cdf: Vec<f64>,
    pub mean_eta_h: f64,
    pub mean_eta_g: f64,
    /// Percent change of each metric against the baseline, when compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percent_deltas: Option<BTreeMap<String, Option<f64>>>,
}

/// Every scalar KPI in a fixed order, with its key.
pub const METRICS: [&str; 9] = [
    "rms_te_w",
    "mileage_gvo_deg",
    "mileage_rba_deg",
    "nom_gvo",
    "nom_rba",
    "rbt_derivative_p95",
    "mean_eta_h",
    "mean_eta_g",
    "samples",
];

impl KpiReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        Some(match key {
            "rms_te_w" => self.rms_te_w,
            "mileage_gvo_deg" => self.mileage_gvo_deg,
            "mileage_rba_deg" => self.mileage_rba_deg,
            "nom_gvo" => self.nom_gvo as f64,
            "nom_rba" => self.nom_rba as f64,
            "rbt_derivative_p95" => self.rbt_derivative_p95,
            "mean_eta_h" => self.mean_eta_h,
            "mean_eta_g" => self.mean_eta_g,
            "samples" => self.samples as f64,
            _ => return None,
        })
    }

    /// Percent change of every metric relative to `baseline`. A zero
    /// baseline yields 0 when both are zero and `None` otherwise.
    pub fn deltas_against(&self, baseline: &KpiReport) -> BTreeMap<String, Option<f64>> {
        METRICS
            .iter()
            .map(|&k| {
                let (x, b) = (self.metric(k).unwrap(), baseline.metric(k).unwrap());
                let d = if b != 0.0 {
                    Some(100.0 * (x - b) / b.abs())
                } else if x == 0.0 {
                    Some(0.0)
                } else {
                    None
                };
                (k.to_string(), d)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: KpiReport = serde_json::from_str(s)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported KPI report schema_version {} (expected {SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// All indicators of one trace.
pub fn compute_report(trace: &Trace, cfg: &KpiConfig, label: &str) -> Result<KpiReport> {
    cfg.validate()?;
    let dt = trace.step()?;
    let te = tracking_error(&trace.p_set_w, &trace.p_pcc_w)?;
    let t0 = trace.time_s[0];
    let k1 = trace.time_s.partition_point(|&t| t - t0 < cfg.warmup_s);
    let bin = (cfg.averaging_s / dt).round().max(1.0) as usize;
    let rms = rms_te(&te, (k1, te.len()), bin)?;
    let cdf = rbt_derivative_cdf(&trace.rbt_nm, dt, cfg.rbt_absolute)?;
    let (mean_eta_h, mean_eta_g) = efficiency_series(trace, cfg)?.means();
    Ok(KpiReport {
        schema_version: SCHEMA_VERSION,
        label: label.to_string(),
        samples: trace.len(),
        rms_te_w: rms,
        mileage_gvo_deg: mileage(&trace.gvo_deg, cfg.eps_noise_deg),
        mileage_rba_deg: mileage(&trace.rba_deg, cfg.eps_noise_deg),
        nom_gvo: number_of_movements(&trace.gvo_deg, dt, cfg.eps_move_deg, cfg.rest_s),
        nom_rba: number_of_movements(&trace.rba_deg, dt, cfg.eps_move_deg, cfg.rest_s),
        rbt_derivative_p95: quantile(&cdf, 0.95),
        rbt_derivative_cdf: cdf,
        mean_eta_h,
        mean_eta_g,
        percent_deltas: None,
    })
}
