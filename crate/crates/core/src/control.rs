//! Governors for the standalone Kaplan unit, the variable-speed propeller
//! and the BESS hybrid, plus the two-layer hybrid power split.
//!
//! Every governor is feedforward through the CAM's predicted-power column
//! with a PI trim on the measured hydro output. The hybrid's hydro unit
//! tracks the slow part of the set-point only; the battery takes the rest.

use serde::{Deserialize, Serialize};

use crate::cam::{CamMode, CamTable, SetpointMap};
use crate::error::{Error, Result};
use crate::physics::{fcr_setpoint, DroopConfig};
use crate::plant::{ActuatorRefs, BessConfig, PlantState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GovernorMode {
    OnlyHydro,
    VarSpeed,
    HybridBess,
}

impl GovernorMode {
    pub fn cam_mode(self) -> CamMode {
        match self {
            GovernorMode::VarSpeed => CamMode::VarSpeed,
            _ => CamMode::Kaplan,
        }
    }
}

/// PI gains of the power loop, °/W and °/(W·s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
    /// The integrator holds while the guide vanes trail their reference by
    /// more than this, deg. Stops windup during rate-limited travel.
    pub hold_band_deg: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self {
            kp: 2e-4,
            ki: 5e-5,
            hold_band_deg: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridSplitConfig {
    /// Cut-off of the low-pass that feeds the hydro unit, Hz.
    pub lp_cutoff_hz: f64,
    pub soc_target: f64,
    pub recenter_period_s: f64,
    /// W per unit SoC error. `None` means twice the battery rating.
    pub recenter_gain: Option<f64>,
}

impl Default for HybridSplitConfig {
    fn default() -> Self {
        Self {
            lp_cutoff_hz: 1.0 / 300.0,
            soc_target: 0.5,
            recenter_period_s: 300.0,
            recenter_gain: None,
        }
    }
}

impl HybridSplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lp_cutoff_hz > 0.0) {
            return Err(Error::Config("lp_cutoff_hz must be positive".into()));
        }
        if !(self.soc_target > 0.0 && self.soc_target < 1.0) {
            return Err(Error::Config("soc_target must lie in (0, 1)".into()));
        }
        if !(self.recenter_period_s > 0.0) {
            return Err(Error::Config("recenter_period_s must be positive".into()));
        }
        if let Some(g) = self.recenter_gain {
            if !(g >= 0.0) {
                return Err(Error::Config("recenter_gain must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn gain_for(&self, bess: &BessConfig) -> f64 {
        self.recenter_gain.unwrap_or(2.0 * bess.p_rated_w)
    }
}

/// Controller section of the scenario configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub pi: PiGains,
    pub split: HybridSplitConfig,
}

/// State of the two-layer split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSplit {
    cfg: HybridSplitConfig,
    gain: f64,
    lp: f64,
    bias: f64,
    next_recenter: f64,
}

impl HybridSplit {
    /// Split already settled on `p_set` with no recentering bias.
    pub fn new(cfg: HybridSplitConfig, gain: f64, p_set: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            gain,
            lp: p_set,
            bias: 0.0,
            next_recenter: cfg.recenter_period_s,
        })
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Advances the split by `dt` and returns `(p_hydro_ref, p_bess_ref)`.
    ///
    /// Layer 1 low-passes `p_set` for the hydro unit. Layer 2 updates, once
    /// per recentering period, a hydro bias proportional to the SoC deficit
    /// so the battery drifts back to its target.
    pub fn step(&mut self, p_set: f64, soc: f64, t: f64, dt: f64) -> (f64, f64) {
        if t >= self.next_recenter {
            self.bias = self.gain * (self.cfg.soc_target - soc);
            while self.next_recenter <= t {
                self.next_recenter += self.cfg.recenter_period_s;
            }
        }
        // the bias goes through the same low-pass so a recentering update
        // never steps the hydro reference
        let a = -(-2.0 * std::f64::consts::PI * self.cfg.lp_cutoff_hz * dt).exp_m1();
        self.lp += (p_set + self.bias - self.lp) * a;
        (self.lp, p_set - self.lp)
    }
}

/// CAM columns cached for interpolation in the control loop.
#[derive(Debug, Clone, PartialEq)]
struct CamLookup {
    alphas: Vec<f64>,
    controls: Vec<f64>,
}

impl CamLookup {
    fn new(table: &CamTable) -> Self {
        Self {
            alphas: table.rows.iter().map(|r| r.alpha_deg).collect(),
            controls: table.rows.iter().map(|r| r.control).collect(),
        }
    }

    fn at(&self, alpha: f64) -> f64 {
        let (xs, ys) = (&self.alphas, &self.controls);
        let last = xs.len() - 1;
        if alpha <= xs[0] {
            return ys[0];
        }
        if alpha >= xs[last] {
            return ys[last];
        }
        let j = xs.partition_point(|&x| x <= alpha);
        let i = j - 1;
        let t = (alpha - xs[i]) / (xs[j] - xs[i]);
        ys[i] + t * (ys[j] - ys[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GovernorConfig {
    pub droop: DroopConfig,
    pub mode: GovernorMode,
    pub cam: CamTable,
    pub pi: PiGains,
    /// Shaft-to-PCC efficiency used to turn electrical set-points into
    /// shaft power for the feedforward.
    pub chain_efficiency: f64,
    /// Guide-vane travel, deg.
    pub alpha_limits: (f64, f64),
    /// Rated speed of the fixed-speed unit, rev/s.
    pub n_rated: f64,
    pub split: HybridSplitConfig,
    /// Battery of the hybrid; ignored in the other modes.
    pub bess: BessConfig,
}

/// Diagnostic by-products of one governor step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorOutput {
    pub refs: ActuatorRefs,
    pub p_set: f64,
    pub p_hydro_ref: f64,
    /// Feedforward asked for more than the table covers.
    pub saturated: bool,
}

#[derive(Debug, Clone)]
pub struct Governor {
    cfg: GovernorConfig,
    map: SetpointMap,
    lookup: CamLookup,
    integral: f64,
    last_alpha: Option<f64>,
    split: Option<HybridSplit>,
}

impl Governor {
    pub fn new(cfg: GovernorConfig, p_disp: f64) -> Result<Self> {
        cfg.droop.validate()?;
        if cfg.cam.mode != cfg.mode.cam_mode() {
            return Err(Error::Config(format!(
                "{:?} governor needs a {:?} CAM, got {:?}",
                cfg.mode,
                cfg.mode.cam_mode(),
                cfg.cam.mode
            )));
        }
        if cfg.mode == GovernorMode::VarSpeed && cfg.cam.fixed_beta_deg.is_none() {
            return Err(Error::Config("variable-speed CAM lacks a fixed blade angle".into()));
        }
        if !(cfg.chain_efficiency > 0.0 && cfg.chain_efficiency <= 1.0) {
            return Err(Error::Config("chain_efficiency must lie in (0, 1]".into()));
        }
        if !(cfg.alpha_limits.0 < cfg.alpha_limits.1) {
            return Err(Error::Config("alpha limits must be increasing".into()));
        }
        if !(cfg.pi.kp >= 0.0 && cfg.pi.ki >= 0.0 && cfg.pi.hold_band_deg > 0.0) {
            return Err(Error::Config(
                "PI gains must be non-negative and the hold band positive".into(),
            ));
        }
        let map = SetpointMap::from_table(&cfg.cam)?;
        let lookup = CamLookup::new(&cfg.cam);
        let split = match cfg.mode {
            GovernorMode::HybridBess => {
                cfg.bess.validate()?;
                let gain = cfg.split.gain_for(&cfg.bess);
                Some(HybridSplit::new(cfg.split, gain, p_disp)?)
            }
            _ => None,
        };
        Ok(Self {
            cfg,
            map,
            lookup,
            integral: 0.0,
            last_alpha: None,
            split,
        })
    }

    pub fn config(&self) -> &GovernorConfig {
        &self.cfg
    }

    /// References that hold a hydro output of `p_hydro` (W at the PCC) with
    /// the integrator at rest. Used to start a run on its operating point.
    pub fn operating_point(&self, p_hydro: f64) -> ActuatorRefs {
        let (alpha, _) = self.map.alpha_for(p_hydro / self.cfg.chain_efficiency);
        let alpha = alpha.clamp(self.cfg.alpha_limits.0, self.cfg.alpha_limits.1);
        self.refs_for(alpha, 0.0)
    }

    fn refs_for(&self, alpha: f64, p_bess: f64) -> ActuatorRefs {
        match self.cfg.mode {
            GovernorMode::VarSpeed => ActuatorRefs {
                alpha,
                beta: self.cfg.cam.fixed_beta_deg.unwrap_or_default(),
                n: self.lookup.at(alpha),
                p_bess,
            },
            _ => ActuatorRefs {
                alpha,
                beta: self.lookup.at(alpha),
                n: self.cfg.n_rated,
                p_bess,
            },
        }
    }

    /// One control step at time `t`: FCR set-point, power split, feedforward
    /// and PI trim on the measured hydro output.
    pub fn step(&mut self, f: f64, p_disp: f64, plant: &PlantState, t: f64, dt: f64) -> GovernorOutput {
        let p_set = fcr_setpoint(p_disp, f, &self.cfg.droop);
        let (p_hydro_ref, p_bess_ref) = match self.split.as_mut() {
            Some(split) => {
                let (_, bess_share) = split.step(p_set, plant.soc, t, dt);
                // the battery only takes what it can deliver this step
                let (lo, hi) = self.cfg.bess.power_window(plant.soc, dt);
                let p_bess = bess_share.clamp(lo, hi);
                (p_set - p_bess, p_bess)
            }
            None => (p_set, 0.0),
        };
        let (ff, saturated) = self.map.alpha_for(p_hydro_ref / self.cfg.chain_efficiency);
        let measured = plant.p_pcc - plant.p_bess;
        let error = p_hydro_ref - measured;
        let (lo, hi) = self.cfg.alpha_limits;
        let base = ff + self.cfg.pi.kp * error;
        let lagging = self
            .last_alpha
            .is_some_and(|a| (a - plant.gvo.position).abs() > self.cfg.pi.hold_band_deg);
        let integral = if lagging {
            self.integral
        } else {
            self.integral + self.cfg.pi.ki * error * dt
        };
        // anti-windup: the integrator never pushes the reference past the travel
        self.integral = integral.clamp((lo - base).min(0.0), (hi - base).max(0.0));
        let alpha = (base + self.integral).clamp(lo, hi);
        self.last_alpha = Some(alpha);
        GovernorOutput {
            refs: self.refs_for(alpha, p_bess_ref),
            p_set,
            p_hydro_ref,
            saturated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::CamRow;

    fn kaplan_cam() -> CamTable {
        CamTable {
            mode: CamMode::Kaplan,
            head_m: 10.0,
            fixed_beta_deg: None,
            fixed_n: Some(25.0),
            rows: (0..=30)
                .map(|i| {
                    let a = i as f64;
                    CamRow {
                        alpha_deg: a,
                        control: 12.0 + 0.3 * a,
                        eta_pred: 0.9,
                        p_pred_w: 2500.0 * a,
                    }
                })
                .collect(),
        }
    }

    fn varspeed_cam() -> CamTable {
        CamTable {
            mode: CamMode::VarSpeed,
            fixed_beta_deg: Some(18.0),
            fixed_n: None,
            rows: kaplan_cam()
                .rows
                .into_iter()
                .map(|r| CamRow {
                    control: 15.0 + 0.3 * r.alpha_deg,
                    ..r
                })
                .collect(),
            ..kaplan_cam()
        }
    }

    fn config(mode: GovernorMode) -> GovernorConfig {
        GovernorConfig {
            droop: DroopConfig::default(),
            mode,
            cam: if mode == GovernorMode::VarSpeed {
                varspeed_cam()
            } else {
                kaplan_cam()
            },
            pi: PiGains::default(),
            chain_efficiency: 1.0,
            alpha_limits: (0.0, 30.0),
            n_rated: 25.0,
            split: HybridSplitConfig::default(),
            bess: BessConfig::rated(5000.0, 5000.0),
        }
    }

    fn steady_plant(p: f64) -> PlantState {
        let servo = crate::plant::ServoConfig::guide_vanes().at(10.0);
        PlantState {
            gvo: servo,
            rba: servo,
            n: 25.0,
            head: 10.0,
            q: 0.5,
            t_shaft: 0.0,
            t_blade: 0.0,
            p_h: 0.0,
            p_m: p,
            p_hydro: p,
            p_pcc: p,
            soc: 0.5,
            p_bess: 0.0,
            eta_h: 0.9,
        }
    }

    #[test]
    fn nominal_frequency_gives_dispatch_point() {
        let mut g = Governor::new(config(GovernorMode::OnlyHydro), 27_000.0).unwrap();
        let out = g.step(50.0, 27_000.0, &steady_plant(27_000.0), 0.0, 0.02);
        assert_eq!(out.p_set, 27_000.0);
        assert!((out.refs.alpha - 10.8).abs() < 1e-12);
        assert!((out.refs.beta - (12.0 + 0.3 * 10.8)).abs() < 1e-12);
        assert_eq!(out.refs.n, 25.0);
    }

    #[test]
    fn underfrequency_step_opens_vanes() {
        let mut g = Governor::new(config(GovernorMode::VarSpeed), 27_000.0).unwrap();
        let before = g.step(50.0, 27_000.0, &steady_plant(27_000.0), 0.0, 0.02);
        let after = g.step(49.9, 27_000.0, &steady_plant(27_000.0), 0.02, 0.02);
        assert!((after.p_set - 39_500.0).abs() < 1e-6);
        assert!(after.refs.alpha > before.refs.alpha);
        assert!(after.refs.n > before.refs.n);
        assert_eq!(after.refs.beta, 18.0);
    }

    #[test]
    fn cam_mode_must_match() {
        let mut cfg = config(GovernorMode::VarSpeed);
        cfg.cam = kaplan_cam();
        assert!(Governor::new(cfg, 27_000.0).is_err());
    }

    #[test]
    fn split_step_goes_to_battery_first() {
        let mut s = HybridSplit::new(HybridSplitConfig::default(), 10_000.0, 27_000.0).unwrap();
        let (h, b) = s.step(32_000.0, 0.5, 0.02, 0.02);
        assert!(b > 4990.0 && b <= 5000.0);
        assert_eq!(h + b, 32_000.0);
        let mut last = b;
        for k in 2..30_000 {
            let (_, b) = s.step(32_000.0, 0.5, k as f64 * 0.02, 0.02);
            assert!(b <= last);
            last = b;
        }
        assert!(last.abs() < 1.0);
    }

    #[test]
    fn low_soc_biases_hydro_upward() {
        let mut s = HybridSplit::new(HybridSplitConfig::default(), 10_000.0, 27_000.0).unwrap();
        let (h0, _) = s.step(27_000.0, 0.3, 299.98, 0.02);
        assert_eq!(h0, 27_000.0);
        let (h1, b1) = s.step(27_000.0, 0.3, 300.0, 0.02);
        assert_eq!(s.bias(), 2_000.0);
        assert!(h1 > 27_000.0 && h1 < 27_100.0, "no step in the hydro reference: {h1}");
        assert!(b1 < 0.0);
        let mut h = h1;
        for k in 1..25_000 {
            h = s.step(27_000.0, 0.3, 300.0 + k as f64 * 0.02, 0.02).0;
        }
        assert!((h - 29_000.0).abs() < 1.0, "{h}");
    }

    #[test]
    fn disabled_battery_reproduces_only_hydro() {
        let mut cfg = config(GovernorMode::HybridBess);
        cfg.bess = BessConfig::disabled();
        let mut hybrid = Governor::new(cfg, 27_000.0).unwrap();
        let mut alone = Governor::new(config(GovernorMode::OnlyHydro), 27_000.0).unwrap();
        for k in 0..500 {
            let f = 50.0 - 0.0001 * (k % 37) as f64;
            let plant = steady_plant(26_000.0 + k as f64);
            let t = k as f64 * 0.02;
            let a = hybrid.step(f, 27_000.0, &plant, t, 0.02);
            let b = alone.step(f, 27_000.0, &plant, t, 0.02);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn integrator_holds_while_vanes_trail() {
        let mut g = Governor::new(config(GovernorMode::OnlyHydro), 27_000.0).unwrap();
        let plant = steady_plant(20_000.0);
        let first = g.step(50.0, 27_000.0, &plant, 0.0, 0.02);
        assert!(first.refs.alpha - plant.gvo.position > 0.25);
        let a = g.step(50.0, 27_000.0, &plant, 0.02, 0.02);
        let b = g.step(50.0, 27_000.0, &plant, 0.04, 0.02);
        assert_eq!(a.refs.alpha, b.refs.alpha);

        // same error with the vanes on their reference: the integrator runs
        let mut g = Governor::new(config(GovernorMode::OnlyHydro), 27_000.0).unwrap();
        let mut plant = steady_plant(20_000.0);
        let mut last = g.step(50.0, 27_000.0, &plant, 0.0, 0.02).refs.alpha;
        for k in 1..5 {
            plant.gvo.position = last;
            let a = g.step(50.0, 27_000.0, &plant, k as f64 * 0.02, 0.02).refs.alpha;
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn integrator_respects_travel() {
        let mut g = Governor::new(config(GovernorMode::OnlyHydro), 27_000.0).unwrap();
        for k in 0..10_000 {
            let out = g.step(49.0, 27_000.0, &steady_plant(0.0), k as f64 * 0.02, 0.02);
            assert!(out.refs.alpha <= 30.0);
        }
        // a windup-free integrator lets go as soon as the error flips
        let out = g.step(50.0, 27_000.0, &steady_plant(60_000.0), 200.0, 0.02);
        assert!(out.refs.alpha < 30.0);
    }
}
