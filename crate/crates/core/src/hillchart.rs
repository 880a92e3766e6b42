//! Synthetic machine characteristics standing in for a measured hill chart.
//!
//! The efficiency surface is a product of three smooth factors:
//!
//! * a ridge profile along the guide-vane opening, `r·e^(1−r)` with
//!   `r = α/α_bep`, which vanishes with the opening, peaks at `α_bep` and is
//!   log-concave;
//! * a Gaussian in the blade incidence `β − β_ideal(α, n_ED)`;
//! * a Gaussian in `n_ED − n_opt(α)`.
//!
//! `β_ideal` rises with the opening (the Kaplan CAM shape) and falls with
//! speed, so a fixed-blade runner recovers part of its incidence loss by
//! slowing down at part load. The global maximum is
//! `(α_bep, β_bep, n_ED at rated speed)`.
//!
//! Discharge factor and blade-pin torque are analytic too; the discharge
//! scale is calibrated so the BEP discharge at the reference head matches
//! the runner's specific speed.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{
    angular_speed, discharge_for_specific_speed, hydraulic_power, rpm_to_rev_s, speed_coefficient,
    speed_from_coefficient, TurbineGeometry, WATER,
};

/// Anything that can predict discharge in m³/s at an operating point.
pub trait DischargeModel {
    fn discharge(&self, alpha: f64, beta: f64, n_ed: f64, head: f64) -> Result<f64>;
    /// Runner diameter used to convert speeds to n_ED, m.
    fn diameter_m(&self) -> f64;
}

/// Parameters of the analytic surfaces. All angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HillChartParams {
    pub eta_peak: f64,
    pub alpha_bep: f64,
    pub beta_bep: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Width of the incidence Gaussian, deg.
    pub beta_width: f64,
    /// Width of the speed Gaussian, n_ED units.
    pub ned_width: f64,
    /// d β_ideal / dα along the fixed-speed optimum, deg/deg.
    pub cam_slope_beta: f64,
    /// d n_opt / dα, n_ED per deg.
    pub cam_slope_ned: f64,
    /// Drop of β_ideal per unit rise of n_ED, deg.
    pub blade_speed_coupling: f64,
    /// Relative discharge change per degree of blade angle.
    pub discharge_beta_gain: f64,
    /// Quadratic discharge reduction away from the BEP speed factor.
    pub discharge_ned_gain: f64,
    /// Specific speed of the runner used to calibrate discharge.
    pub specific_speed: f64,
    /// Head at which the calibration holds, m.
    pub reference_head_m: f64,
    /// Share of the per-blade shaft torque seen at the blade pin.
    pub blade_load_share: f64,
    /// Pin torque per degree of blade angle away from the BEP angle, N·m/deg at the reference head.
    pub blade_pitch_gain: f64,
    /// Pin torque per squared degree of incidence, N·m/deg² at the reference head.
    pub blade_incidence_gain: f64,
    pub blades: u32,
}

impl Default for HillChartParams {
    fn default() -> Self {
        Self {
            eta_peak: 0.92,
            alpha_bep: 20.0,
            beta_bep: 18.0,
            alpha_max: 30.0,
            beta_min: 0.0,
            beta_max: 30.0,
            beta_width: 16.0,
            ned_width: 1.8,
            cam_slope_beta: 0.3,
            cam_slope_ned: 0.03,
            blade_speed_coupling: 8.0,
            discharge_beta_gain: 0.04,
            discharge_ned_gain: 1.0,
            specific_speed: 1.53,
            reference_head_m: 10.0,
            blade_load_share: 0.02,
            blade_pitch_gain: 2.0,
            blade_incidence_gain: 0.2,
            blades: 4,
        }
    }
}

/// Ground-truth machine characteristics: efficiency, discharge and blade torque.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthHillChart {
    params: HillChartParams,
    geometry: TurbineGeometry,
    /// n_ED at rated speed and reference head.
    ned_bep: f64,
    /// Discharge-factor scale, calibrated at construction.
    q_scale: f64,
}

/// One row of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillChartSample {
    #[serde(rename = "alpha_deg")]
    pub alpha: f64,
    #[serde(rename = "beta_deg")]
    pub beta: f64,
    #[serde(rename = "n_ed")]
    pub n_ed: f64,
    pub eta: f64,
    #[serde(rename = "q_ed")]
    pub q_ed: f64,
}

impl GroundTruthHillChart {
    pub fn new(params: HillChartParams, geometry: TurbineGeometry) -> Result<Self> {
        geometry.validate()?;
        let p = &params;
        if !(p.eta_peak > 0.0 && p.eta_peak <= 0.95) {
            return Err(Error::Config("eta_peak must lie in (0, 0.95]".into()));
        }
        if !(p.alpha_bep > 0.0 && p.alpha_bep < p.alpha_max) {
            return Err(Error::Config("alpha_bep must lie in (0, alpha_max)".into()));
        }
        if !(p.beta_min <= p.beta_bep && p.beta_bep <= p.beta_max) {
            return Err(Error::Config("beta_bep must lie in [beta_min, beta_max]".into()));
        }
        if !(p.beta_width > 0.0 && p.ned_width > 0.0 && p.cam_slope_ned > 0.0) {
            return Err(Error::Config("surface widths and slopes must be positive".into()));
        }
        if 1.0 + p.discharge_beta_gain * (p.beta_min - p.beta_bep) <= 0.0
            || 1.0 + p.discharge_beta_gain * (p.beta_max - p.beta_bep) <= 0.0
        {
            return Err(Error::Config(
                "discharge_beta_gain makes discharge negative inside the blade range".into(),
            ));
        }
        let head = p.reference_head_m;
        let ned_bep = speed_coefficient(geometry.n_rated, geometry.diameter_m, head)?;
        if 1.0 - p.discharge_ned_gain * ned_bep.max(1.5 - ned_bep).powi(2) <= 0.0 {
            return Err(Error::Config(
                "discharge_ned_gain makes discharge negative inside the speed range".into(),
            ));
        }
        let q_bep = discharge_for_specific_speed(p.specific_speed, angular_speed(geometry.n_rated), WATER.g * head)?;
        let unit = geometry.diameter_m.powi(2) * (WATER.g * head).sqrt();
        let q_scale = q_bep / (unit * p.alpha_bep.to_radians().sin());
        Ok(Self {
            params,
            geometry,
            ned_bep,
            q_scale,
        })
    }

    pub fn params(&self) -> &HillChartParams {
        &self.params
    }

    pub fn geometry(&self) -> &TurbineGeometry {
        &self.geometry
    }

    /// n_ED of the best-efficiency point.
    pub fn ned_bep(&self) -> f64 {
        self.ned_bep
    }

    /// Discharge at the BEP under the reference head, m³/s.
    pub fn discharge_bep(&self) -> f64 {
        let p = &self.params;
        self.discharge_at(p.alpha_bep, p.beta_bep, self.ned_bep, p.reference_head_m)
    }

    fn check_domain(&self, alpha: f64, beta: f64, n_ed: f64) -> Result<()> {
        let p = &self.params;
        const SLACK: f64 = 1e-9;
        if !(alpha >= -SLACK && alpha <= p.alpha_max + SLACK) {
            return Err(Error::Domain(format!("GVO {alpha} deg outside [0, {}]", p.alpha_max)));
        }
        if !(beta >= p.beta_min - SLACK && beta <= p.beta_max + SLACK) {
            return Err(Error::Domain(format!(
                "RBA {beta} deg outside [{}, {}]",
                p.beta_min, p.beta_max
            )));
        }
        if !(0.0..=1.5).contains(&n_ed) {
            return Err(Error::Domain(format!("n_ED {n_ed} outside [0, 1.5]")));
        }
        Ok(())
    }

    /// Blade angle with zero incidence for the given opening and speed factor.
    pub fn ideal_beta(&self, alpha: f64, n_ed: f64) -> f64 {
        let p = &self.params;
        p.beta_bep + p.cam_slope_beta * (alpha - p.alpha_bep) - p.blade_speed_coupling * (n_ed - self.ned_bep)
    }

    /// Speed factor maximizing efficiency at `beta_bep` for the given opening.
    pub fn optimal_ned(&self, alpha: f64) -> f64 {
        let p = &self.params;
        self.ned_bep + p.cam_slope_ned * (alpha - p.alpha_bep)
    }

    fn ridge(&self, alpha: f64) -> (f64, f64) {
        let a_bep = self.params.alpha_bep;
        let r = alpha.max(0.0) / a_bep;
        let e = (1.0 - r).exp();
        (r * e, e * (1.0 - r) / a_bep)
    }

    fn unchecked_eta(&self, alpha: f64, beta: f64, n_ed: f64) -> f64 {
        let p = &self.params;
        let (g, _) = self.ridge(alpha);
        let u = (beta - self.ideal_beta(alpha, n_ed)) / p.beta_width;
        let w = (n_ed - self.optimal_ned(alpha)) / p.ned_width;
        p.eta_peak * g * (-(u * u) - w * w).exp()
    }

    fn q_ed_unchecked(&self, alpha: f64, beta: f64, n_ed: f64) -> f64 {
        let p = &self.params;
        let dn = n_ed - self.ned_bep;
        self.q_scale
            * alpha.max(0.0).to_radians().sin()
            * (1.0 + p.discharge_beta_gain * (beta - p.beta_bep))
            * (1.0 - p.discharge_ned_gain * dn * dn)
    }

    fn discharge_at(&self, alpha: f64, beta: f64, n_ed: f64, head: f64) -> f64 {
        self.q_ed_unchecked(alpha, beta, n_ed) * self.geometry.diameter_m.powi(2) * (WATER.g * head).sqrt()
    }

    /// Hydraulic efficiency and discharge factor Q_ED at a point.
    pub fn eval(&self, alpha: f64, beta: f64, n_ed: f64) -> Result<(f64, f64)> {
        self.check_domain(alpha, beta, n_ed)?;
        Ok((
            self.unchecked_eta(alpha, beta, n_ed),
            self.q_ed_unchecked(alpha, beta, n_ed),
        ))
    }

    pub fn eta(&self, alpha: f64, beta: f64, n_ed: f64) -> Result<f64> {
        self.check_domain(alpha, beta, n_ed)?;
        Ok(self.unchecked_eta(alpha, beta, n_ed))
    }

    /// Analytic gradient `(∂η/∂α, ∂η/∂β, ∂η/∂n_ED)`.
    pub fn eta_gradient(&self, alpha: f64, beta: f64, n_ed: f64) -> Result<[f64; 3]> {
        self.check_domain(alpha, beta, n_ed)?;
        let p = &self.params;
        let (g, dg) = self.ridge(alpha);
        let u = (beta - self.ideal_beta(alpha, n_ed)) / p.beta_width;
        let w = (n_ed - self.optimal_ned(alpha)) / p.ned_width;
        let e = p.eta_peak * (-(u * u) - w * w).exp();
        let k = p.blade_speed_coupling;
        // d(u)/dα = -kb/sβ, d(w)/dα = -kn/sν
        let d_alpha =
            e * (dg + g * (2.0 * u * p.cam_slope_beta / p.beta_width + 2.0 * w * p.cam_slope_ned / p.ned_width));
        let d_beta = -e * g * 2.0 * u / p.beta_width;
        let d_ned = -e * g * (2.0 * u * k / p.beta_width + 2.0 * w / p.ned_width);
        Ok([d_alpha, d_beta, d_ned])
    }

    /// Per-blade pin torque in N·m.
    pub fn blade_torque(&self, alpha: f64, beta: f64, n_ed: f64, head: f64) -> Result<f64> {
        self.check_domain(alpha, beta, n_ed)?;
        if !(head > 0.0) {
            return Err(Error::Domain(format!("head must be positive, got {head}")));
        }
        let p = &self.params;
        let eta = self.unchecked_eta(alpha, beta, n_ed);
        let p_m = eta * hydraulic_power(self.discharge_at(alpha, beta, n_ed, head), head);
        let n = speed_from_coefficient(n_ed, self.geometry.diameter_m, head)?;
        let omega = angular_speed(n);
        let load = if omega > 0.0 {
            p_m / (omega * p.blades as f64)
        } else {
            0.0
        };
        let incidence = beta - self.ideal_beta(alpha, n_ed);
        let hydraulic_scale = head / p.reference_head_m;
        Ok(p.blade_load_share * load
            + hydraulic_scale
                * (p.blade_pitch_gain * (beta - p.beta_bep) + p.blade_incidence_gain * incidence * incidence))
    }

    /// Speed range of the variable-speed tests expressed as n_ED.
    pub fn ned_range(&self, rpm_min: f64, rpm_max: f64, head: f64) -> Result<(f64, f64)> {
        let d = self.geometry.diameter_m;
        Ok((
            speed_coefficient(rpm_to_rev_s(rpm_min), d, head)?,
            speed_coefficient(rpm_to_rev_s(rpm_max), d, head)?,
        ))
    }
}

impl DischargeModel for GroundTruthHillChart {
    fn discharge(&self, alpha: f64, beta: f64, n_ed: f64, head: f64) -> Result<f64> {
        self.check_domain(alpha, beta, n_ed)?;
        if !(head > 0.0) {
            return Err(Error::Domain(format!("head must be positive, got {head}")));
        }
        Ok(self.discharge_at(alpha, beta, n_ed, head))
    }

    fn diameter_m(&self) -> f64 {
        self.geometry.diameter_m
    }
}

/// Full-factorial sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_step: f64,
    /// Speed span of the variable-speed tests, min⁻¹.
    pub rpm_min: f64,
    pub rpm_max: f64,
    /// Number of uniformly spaced n_ED levels across the speed span.
    pub ned_levels: usize,
    pub head_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alpha_min: 0.0,
            alpha_max: 30.0,
            alpha_step: 1.0,
            beta_min: 0.0,
            beta_max: 30.0,
            beta_step: 1.0,
            rpm_min: 500.0,
            rpm_max: 1500.0,
            ned_levels: 11,
            head_m: 10.0,
        }
    }
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return Vec::new();
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| min + i as f64 * step).collect()
}

impl GridSpec {
    pub fn alphas(&self) -> Vec<f64> {
        axis(self.alpha_min, self.alpha_max, self.alpha_step)
    }

    pub fn betas(&self) -> Vec<f64> {
        axis(self.beta_min, self.beta_max, self.beta_step)
    }

    pub fn neds(&self, geometry: &TurbineGeometry) -> Result<Vec<f64>> {
        let d = geometry.diameter_m;
        let lo = speed_coefficient(rpm_to_rev_s(self.rpm_min), d, self.head_m)?;
        let hi = speed_coefficient(rpm_to_rev_s(self.rpm_max), d, self.head_m)?;
        Ok(match self.ned_levels {
            0 => Vec::new(),
            1 => vec![hi],
            k => (0..k)
                .map(|i| {
                    if i == k - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (k - 1) as f64
                    }
                })
                .collect(),
        })
    }
}

/// Samples the ground truth on the full-factorial grid, α-major, then β, then n_ED.
///
/// Gaussian noise with standard deviation `noise_sd` is added to the
/// efficiency only; the draw sequence is fixed by `seed`.
pub fn generate_training_set(
    chart: &GroundTruthHillChart,
    grid: &GridSpec,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<HillChartSample>> {
    if !(noise_sd >= 0.0) {
        return Err(Error::Config("noise_sd must be non-negative".into()));
    }
    let alphas = grid.alphas();
    let betas = grid.betas();
    let neds = grid.neds(chart.geometry())?;
    if alphas.is_empty() || betas.is_empty() || neds.is_empty() {
        return Err(Error::Empty("training grid has no nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(alphas.len() * betas.len() * neds.len());
    for &alpha in &alphas {
        for &beta in &betas {
            for &n_ed in &neds {
                let (eta, q_ed) = chart.eval(alpha, beta, n_ed)?;
                let eta = if noise_sd > 0.0 {
                    eta + noise.sample(&mut rng)
                } else {
                    eta
                };
                out.push(HillChartSample {
                    alpha,
                    beta,
                    n_ed,
                    eta,
                    q_ed,
                });
            }
        }
    }
    Ok(out)
}

pub const TRAINING_HEADER: [&str; 5] = ["alpha_deg", "beta_deg", "n_ed", "eta", "q_ed"];

pub fn write_training_csv<W: Write>(samples: &[HillChartSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAINING_HEADER)?;
    for s in samples {
        w.write_record(&[
            s.alpha.to_string(),
            s.beta.to_string(),
            s.n_ed.to_string(),
            s.eta.to_string(),
            s.q_ed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<training csv>", e))?;
    Ok(())
}

pub fn read_training_csv<R: Read>(input: R, label: &str) -> Result<Vec<HillChartSample>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRAINING_HEADER {
        return Err(Error::Parse {
            path: label.to_string(),
            line: 1,
            message: format!("expected header `{}`", TRAINING_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<HillChartSample>().enumerate() {
        let s = row.map_err(|e| Error::Parse {
            path: label.to_string(),
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn load_training_csv(path: &Path) -> Result<Vec<HillChartSample>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_training_csv(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn chart() -> GroundTruthHillChart {
        GroundTruthHillChart::new(HillChartParams::default(), TurbineGeometry::default()).unwrap()
    }

    #[test]
    fn bep_is_peak() {
        let c = chart();
        let (eta, q_ed) = c.eval(20.0, 18.0, c.ned_bep()).unwrap();
        assert!((eta - 0.92).abs() < 1e-15);
        // BEP discharge reproduces the specific speed of the runner
        let q = c.discharge_bep();
        let nu = crate::physics::specific_speed(angular_speed(25.0), q, WATER.g * 10.0).unwrap();
        assert!((nu - 1.53).abs() < 1e-9, "{nu}");
        assert!((q - 0.8187).abs() < 5e-4, "{q}");
        assert!(q_ed > 0.0);
    }

    #[test]
    fn closed_vanes_pass_nothing() {
        let c = chart();
        assert_eq!(c.eval(0.0, 18.0, c.ned_bep()).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn off_design_speed_is_worse() {
        let c = chart();
        let lo = c.eta(20.0, 18.0, 0.286).unwrap();
        assert!(lo < 0.92);
    }

    #[test]
    fn domain_is_enforced() {
        let c = chart();
        assert!(c.eval(31.0, 18.0, 0.5).is_err());
        assert!(c.eval(10.0, -1.0, 0.5).is_err());
        assert!(c.eval(10.0, 18.0, 2.0).is_err());
        assert!(c.blade_torque(10.0, 18.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn global_max_on_dense_scan() {
        let c = chart();
        let mut best = (0.0, 0.0, 0.0, f64::MIN);
        for ia in 0..=60 {
            for ib in 0..=60 {
                for k in 0..=20 {
                    let (a, b) = (ia as f64 * 0.5, ib as f64 * 0.5);
                    let n = 0.286 + (c.ned_bep() - 0.286) * k as f64 / 20.0;
                    let e = c.eta(a, b, n).unwrap();
                    if e > best.3 {
                        best = (a, b, n, e);
                    }
                }
            }
        }
        assert_eq!((best.0, best.1), (20.0, 18.0));
        assert!((best.2 - c.ned_bep()).abs() < 1e-12);
        assert!(best.3 <= 0.95);
    }

    #[test]
    fn alpha_sweep_has_single_interior_max() {
        let c = chart();
        let etas: Vec<f64> = (0..=300)
            .map(|i| c.eta(i as f64 * 0.1, 18.0, c.ned_bep()).unwrap())
            .collect();
        let imax = etas.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(imax > 0 && imax < 300);
        assert!(etas[..=imax].windows(2).all(|w| w[1] >= w[0]));
        assert!(etas[imax..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unimodal_in_alpha_everywhere() {
        let c = chart();
        for ib in 0..=30 {
            for k in 0..=10 {
                let n = 0.286 + 0.0572 * k as f64;
                let etas: Vec<f64> = (0..=120)
                    .map(|i| c.eta(i as f64 * 0.25, ib as f64, n).unwrap())
                    .collect();
                let signs: Vec<f64> = etas
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .filter(|d| d.abs() > 1e-14)
                    .map(f64::signum)
                    .collect();
                let changes = signs.windows(2).filter(|s| s[0] != s[1]).count();
                assert!(changes <= 2, "beta={ib} n={n}: {changes}");
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let c = chart();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for _ in 0..100 {
            let a = rng.gen_range(0.5..29.5);
            let b = rng.gen_range(0.5..29.5);
            let n = rng.gen_range(0.3..0.85);
            let g = c.eta_gradient(a, b, n).unwrap();
            let fd = [
                (c.eta(a + h, b, n).unwrap() - c.eta(a - h, b, n).unwrap()) / (2.0 * h),
                (c.eta(a, b + h, n).unwrap() - c.eta(a, b - h, n).unwrap()) / (2.0 * h),
                (c.eta(a, b, n + h).unwrap() - c.eta(a, b, n - h).unwrap()) / (2.0 * h),
            ];
            for i in 0..3 {
                assert!((g[i] - fd[i]).abs() < 1e-6, "{i}: {} vs {}", g[i], fd[i]);
            }
        }
    }

    #[test]
    fn zero_noise_set_equals_ground_truth() {
        let c = chart();
        let grid = GridSpec::default();
        let set = generate_training_set(&c, &grid, 0.0, 42).unwrap();
        assert_eq!(set.len(), 31 * 31 * 11);
        for s in &set {
            let (eta, q) = c.eval(s.alpha, s.beta, s.n_ed).unwrap();
            assert_eq!((s.eta, s.q_ed), (eta, q));
        }
        assert!((set[0].n_ed - 0.286).abs() < 5e-4);
        assert_eq!(set[10].n_ed, c.ned_bep());
    }

    #[test]
    fn noisy_set_is_reproducible() {
        let c = chart();
        let grid = GridSpec::default();
        let a = generate_training_set(&c, &grid, 0.003, 42).unwrap();
        let b = generate_training_set(&c, &grid, 0.003, 42).unwrap();
        let other = generate_training_set(&c, &grid, 0.003, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
        let resid: Vec<f64> = a
            .iter()
            .map(|s| s.eta - c.eta(s.alpha, s.beta, s.n_ed).unwrap())
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resid.len() as f64).sqrt();
        assert!(mean.abs() < 2e-4 && (sd - 0.003).abs() < 2e-4, "{mean} {sd}");
    }

    #[test]
    fn empty_grid_is_an_error() {
        let c = chart();
        let grid = GridSpec {
            alpha_step: 0.0,
            ..GridSpec::default()
        };
        assert!(generate_training_set(&c, &grid, 0.0, 1).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let c = chart();
        let grid = GridSpec {
            alpha_max: 2.0,
            beta_max: 2.0,
            ned_levels: 2,
            ..GridSpec::default()
        };
        let set = generate_training_set(&c, &grid, 0.003, 1).unwrap();
        let mut buf = Vec::new();
        write_training_csv(&set, &mut buf).unwrap();
        assert!(buf.starts_with(b"alpha_deg,beta_deg,n_ed,eta,q_ed\n"));
        let back = read_training_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn discharge_increases_with_opening(a in 0.0..29.0f64, da in 0.01..1.0f64, b in 0.0..30.0f64, n in 0.0..1.5f64) {
            let c = chart();
            let q0 = c.eval(a, b, n).unwrap().1;
            let q1 = c.eval(a + da, b, n).unwrap().1;
            prop_assert!(q1 > q0);
        }

        #[test]
        fn efficiency_is_bounded(a in 0.0..30.0f64, b in 0.0..30.0f64, n in 0.0..1.5f64) {
            let e = chart().eta(a, b, n).unwrap();
            prop_assert!((0.0..=0.95).contains(&e));
        }
    }
}
