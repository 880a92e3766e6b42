//! Physical constants, machine geometry and the closed-form hydraulic and
//! FCR relations shared by every other module.
//!
//! Speeds are carried in rev/s throughout the crate. Conversions to and
//! from min⁻¹ happen only where data enters or leaves (CSV, CLI, plots).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Water density and gravity. Fixed for the lifetime of the program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// kg/m³
    pub rho: f64,
    /// m/s²
    pub g: f64,
}

pub const WATER: PhysicalConstants = PhysicalConstants { rho: 1000.0, g: 9.81 };

/// Reduced-scale runner geometry and ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbineGeometry {
    /// Runner external diameter, m.
    pub diameter_m: f64,
    /// Rated (synchronous) speed, rev/s.
    pub n_rated: f64,
    /// Rated power, W.
    pub p_rated_w: f64,
}

impl Default for TurbineGeometry {
    fn default() -> Self {
        Self {
            diameter_m: 0.34,
            n_rated: 25.0,
            p_rated_w: 50_000.0,
        }
    }
}

impl TurbineGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_m > 0.0) {
            return Err(Error::Config("runner diameter must be positive".into()));
        }
        if !(self.n_rated > 0.0) {
            return Err(Error::Config("rated speed must be positive".into()));
        }
        Ok(())
    }
}

/// Instantaneous hydraulic state of the unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Guide-vane opening, deg.
    pub alpha: f64,
    /// Runner-blade angle, deg.
    pub beta: f64,
    /// Rotational speed, rev/s.
    pub n: f64,
    /// Net head, m.
    pub head: f64,
    /// Discharge, m³/s.
    pub discharge: f64,
}

/// Droop characteristic of the FCR response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroopConfig {
    /// W/Hz
    pub sigma_f: f64,
    /// Hz, applied symmetrically around `f_nom`.
    pub dead_band: f64,
    /// Hz
    pub f_nom: f64,
}

impl Default for DroopConfig {
    fn default() -> Self {
        Self {
            sigma_f: 125_000.0,
            dead_band: 0.002,
            f_nom: 50.0,
        }
    }
}

impl DroopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0) {
            return Err(Error::Config("droop sigma_f must be positive".into()));
        }
        if !(self.dead_band >= 0.0) {
            return Err(Error::Config("dead band must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn rpm_to_rev_s(rpm: f64) -> f64 {
    rpm / 60.0
}

pub fn rev_s_to_rpm(n: f64) -> f64 {
    n * 60.0
}

/// Angular speed in rad/s for a speed in rev/s.
pub fn angular_speed(n: f64) -> f64 {
    2.0 * PI * n
}

/// IEC speed factor n_ED = n·D/√(gH), with `n` in rev/s.
pub fn speed_coefficient(n: f64, diameter: f64, head: f64) -> Result<f64> {
    if !(head > 0.0) {
        return Err(Error::Domain(format!("head must be positive, got {head}")));
    }
    if !(diameter > 0.0) {
        return Err(Error::Domain(format!("diameter must be positive, got {diameter}")));
    }
    Ok(n * diameter / (WATER.g * head).sqrt())
}

/// Inverse of [`speed_coefficient`]: the speed in rev/s giving `n_ed`.
pub fn speed_from_coefficient(n_ed: f64, diameter: f64, head: f64) -> Result<f64> {
    if !(head > 0.0) || !(diameter > 0.0) {
        return Err(Error::Domain("head and diameter must be positive".into()));
    }
    Ok(n_ed * (WATER.g * head).sqrt() / diameter)
}

/// Dimensionless specific speed ν = ω·Q^½ / (π^½·(2E)^¾).
///
/// `omega` in rad/s, `discharge` in m³/s, `specific_energy` E = gH in J/kg.
pub fn specific_speed(omega: f64, discharge: f64, specific_energy: f64) -> Result<f64> {
    if !(specific_energy > 0.0) {
        return Err(Error::Domain(format!(
            "specific energy must be positive, got {specific_energy}"
        )));
    }
    if discharge < 0.0 {
        return Err(Error::Domain(format!(
            "discharge must be non-negative, got {discharge}"
        )));
    }
    Ok(omega * discharge.sqrt() / (PI.sqrt() * (2.0 * specific_energy).powf(0.75)))
}

/// Discharge at which a machine turning at `omega` under `specific_energy`
/// has specific speed `nu`.
pub fn discharge_for_specific_speed(nu: f64, omega: f64, specific_energy: f64) -> Result<f64> {
    if !(specific_energy > 0.0) || !(omega > 0.0) {
        return Err(Error::Domain("omega and specific energy must be positive".into()));
    }
    let root_q = nu * PI.sqrt() * (2.0 * specific_energy).powf(0.75) / omega;
    Ok(root_q * root_q)
}

/// Frequency deviation seen by the droop, zeroed inside the dead band.
pub fn effective_deviation(f: f64, droop: &DroopConfig) -> f64 {
    let dev = droop.f_nom - f;
    // 1e-12 Hz absorbs the rounding of `f_nom ± dead_band` itself
    if dev.abs() <= droop.dead_band + 1e-12 {
        0.0
    } else {
        dev
    }
}

/// FCR power set-point: dispatch plus droop response outside the dead band.
///
/// No saturation is applied here; limiting is the plant's job.
pub fn fcr_setpoint(p_disp: f64, f: f64, droop: &DroopConfig) -> f64 {
    let dev = effective_deviation(f, droop);
    if dev == 0.0 {
        p_disp
    } else {
        p_disp + dev * droop.sigma_f
    }
}

/// Hydraulic power ρ·g·Q·H in W.
pub fn hydraulic_power(discharge: f64, head: f64) -> f64 {
    WATER.rho * WATER.g * discharge * head
}

/// Shaft power T·ω in W; `omega` must already be in rad/s.
pub fn mechanical_power(torque: f64, omega: f64) -> f64 {
    torque * omega
}

/// Global and hydraulic efficiency `(p_pcc/p_h, p_m/p_h)`.
pub fn efficiency_ratios(p_pcc: f64, p_m: f64, p_h: f64) -> Result<(f64, f64)> {
    if !(p_h > 0.0) {
        return Err(Error::Domain(format!("hydraulic power must be positive, got {p_h}")));
    }
    Ok((p_pcc / p_h, p_m / p_h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn speed_coefficient_endpoints() {
        let hi = speed_coefficient(25.0, 0.34, 10.0).unwrap();
        let lo = speed_coefficient(8.333, 0.34, 10.0).unwrap();
        assert!(close(hi, 0.858, 5e-4), "{hi}");
        assert!(close(lo, 0.286, 5e-4), "{lo}");
        assert_eq!(speed_coefficient(0.0, 0.34, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn speed_coefficient_rejects_bad_domain() {
        assert!(speed_coefficient(25.0, 0.34, 0.0).is_err());
        assert!(speed_coefficient(25.0, -0.34, 10.0).is_err());
        assert!(speed_coefficient(25.0, 0.34, -1.0).is_err());
    }

    #[test]
    fn speed_coefficient_inverse() {
        let n = speed_from_coefficient(0.6, 0.34, 10.0).unwrap();
        assert!(close(speed_coefficient(n, 0.34, 10.0).unwrap(), 0.6, 1e-12));
    }

    #[test]
    fn specific_speed_examples() {
        let nu = specific_speed(157.08, 0.8187, 98.1).unwrap();
        assert!(close(nu, 1.53, 1e-3), "{nu}");
        assert_eq!(specific_speed(157.08, 0.0, 98.1).unwrap(), 0.0);
        assert_eq!(specific_speed(0.0, 1.0, 98.1).unwrap(), 0.0);
        assert!(specific_speed(157.08, 1.0, 0.0).is_err());
    }

    #[test]
    fn fcr_setpoint_examples() {
        let d = DroopConfig::default();
        assert_eq!(fcr_setpoint(27_000.0, 50.0, &d), 27_000.0);
        assert!(close(fcr_setpoint(27_000.0, 49.9, &d), 39_500.0, 1e-6));
        assert_eq!(fcr_setpoint(27_000.0, 50.0015, &d), 27_000.0);
        // dead band is closed
        assert_eq!(fcr_setpoint(27_000.0, 50.002, &d), 27_000.0);
    }

    #[test]
    fn power_examples() {
        assert!(close(hydraulic_power(0.8187, 10.0), 80_314.47, 1e-6));
        assert_eq!(hydraulic_power(0.0, 10.0), 0.0);
        assert!(close(hydraulic_power(1.4, 10.0), 137_340.0, 1e-9));
        assert!(close(mechanical_power(300.0, 157.08), 47_124.0, 1e-9));
        assert_eq!(mechanical_power(0.0, 157.08), 0.0);
        assert!(close(mechanical_power(254.6, 104.72), 26_661.712, 1e-6));
    }

    #[test]
    fn efficiency_examples() {
        let (g, h) = efficiency_ratios(40_000.0, 45_000.0, 80_314.0).unwrap();
        assert!(close(g, 0.498, 5e-4) && close(h, 0.560, 5e-4));
        assert_eq!(efficiency_ratios(0.0, 0.0, 80_314.0).unwrap(), (0.0, 0.0));
        let p_m = 30_000.0;
        let (g, h) = efficiency_ratios(0.95 * p_m, p_m, 50_000.0).unwrap();
        assert!(close(g, 0.95 * h, 1e-15));
        assert!(efficiency_ratios(1.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn speed_coefficient_is_homogeneous(n in 0.0..40.0f64, h in 0.5..50.0f64, c in 0.1..10.0f64) {
            let base = speed_coefficient(n, 0.34, h).unwrap();
            let doubled = speed_coefficient(2.0 * n, 0.34, h).unwrap();
            prop_assert!((doubled - 2.0 * base).abs() <= 1e-12 * (1.0 + base));
            let scaled = speed_coefficient(n, 0.34, c * h).unwrap();
            prop_assert!((scaled - base / c.sqrt()).abs() <= 1e-12 * (1.0 + base));
        }

        #[test]
        fn fcr_is_odd_outside_dead_band(delta in 0.0021..0.5f64, p in 0.0..60_000.0f64) {
            let d = DroopConfig::default();
            let up = fcr_setpoint(p, d.f_nom + delta, &d) - p;
            let down = fcr_setpoint(p, d.f_nom - delta, &d) - p;
            prop_assert!((up + down).abs() <= 1e-9 * (1.0 + up.abs()));
        }

        #[test]
        fn fcr_is_flat_inside_dead_band(delta in -0.002..=0.002f64, p in 0.0..60_000.0f64) {
            let d = DroopConfig::default();
            prop_assert_eq!(fcr_setpoint(p, d.f_nom + delta, &d), p);
        }
    }
}
