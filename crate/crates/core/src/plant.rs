//! Discrete-time model of the physical assets: guide-vane and blade
//! servomotors, runner and generator, frequency converter and BESS.
//!
//! Head is constant (run-of-river, no waterway dynamics). Rotor inertia is
//! folded into the speed lag of the converter-regulated variable-speed unit;
//! the fixed-speed unit is pinned to its synchronous speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hillchart::{DischargeModel, GroundTruthHillChart};
use crate::physics::{angular_speed, hydraulic_power, rpm_to_rev_s, speed_coefficient, TurbineGeometry};

/// Servo dynamics and travel limits, degrees and seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoConfig {
    pub rate_limit: f64,
    pub time_constant: f64,
    pub min: f64,
    pub max: f64,
}

impl ServoConfig {
    pub fn guide_vanes() -> Self {
        Self {
            rate_limit: 2.0,
            time_constant: 0.2,
            min: 0.0,
            max: 30.0,
        }
    }

    pub fn blades() -> Self {
        Self {
            rate_limit: 0.5,
            time_constant: 0.5,
            min: 0.0,
            max: 30.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.rate_limit > 0.0) {
            return Err(Error::Config(format!("{name}: rate_limit must be positive")));
        }
        if !(self.time_constant >= 0.0) {
            return Err(Error::Config(format!("{name}: time_constant must be non-negative")));
        }
        if !(self.min < self.max) {
            return Err(Error::Config(format!("{name}: min must be below max")));
        }
        Ok(())
    }

    pub fn at(&self, position: f64) -> ServoState {
        ServoState {
            position: position.clamp(self.min, self.max),
            rate_limit: self.rate_limit,
            time_constant: self.time_constant,
            min: self.min,
            max: self.max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoState {
    /// deg
    pub position: f64,
    /// deg/s
    pub rate_limit: f64,
    /// s
    pub time_constant: f64,
    pub min: f64,
    pub max: f64,
}

/// First-order lag toward `reference`, then rate limit, then travel clamp.
pub fn step_servo(s: &ServoState, reference: f64, dt: f64) -> ServoState {
    let target = reference.clamp(s.min, s.max);
    let lagged = if s.time_constant > 0.0 {
        (target - s.position) * -(-dt / s.time_constant).exp_m1()
    } else {
        target - s.position
    };
    let max_step = s.rate_limit * dt;
    let delta = lagged.clamp(-max_step, max_step);
    ServoState {
        position: (s.position + delta).clamp(s.min, s.max),
        ..*s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMode {
    /// Synchronous machine on the grid, speed pinned to rated.
    Fixed,
    /// Full-size converter, speed follows a reference.
    VarSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectricalChain {
    pub eta_gen: f64,
    /// Converter efficiency, applied on the variable-speed path only.
    pub eta_conv: f64,
}

impl Default for ElectricalChain {
    fn default() -> Self {
        Self {
            eta_gen: 0.95,
            eta_conv: 0.97,
        }
    }
}

impl ElectricalChain {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_gen", self.eta_gen), ("eta_conv", self.eta_conv)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Product of the efficiencies between shaft and PCC.
    pub fn efficiency(&self, mode: SpeedMode) -> f64 {
        match mode {
            SpeedMode::Fixed => self.eta_gen,
            SpeedMode::VarSpeed => self.eta_gen * self.eta_conv,
        }
    }
}

/// Electrical output of the hydro unit at the PCC for shaft power `p_m`.
pub fn electrical_power(p_m: f64, mode: SpeedMode, chain: &ElectricalChain) -> f64 {
    match mode {
        SpeedMode::Fixed => p_m * chain.eta_gen,
        SpeedMode::VarSpeed => p_m * chain.eta_gen * chain.eta_conv,
    }
}

/// Battery rating and efficiencies. `p_rated_w = 0` disables the battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BessConfig {
    pub p_rated_w: f64,
    pub e_rated_wh: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub soc_init: f64,
}

impl Default for BessConfig {
    fn default() -> Self {
        Self::rated(5_000.0, 5_000.0)
    }
}

impl BessConfig {
    pub fn rated(p_rated_w: f64, e_rated_wh: f64) -> Self {
        Self {
            p_rated_w,
            e_rated_wh,
            eta_charge: 0.95,
            eta_discharge: 0.95,
            soc_init: 0.5,
        }
    }

    pub fn disabled() -> Self {
        Self {
            p_rated_w: 0.0,
            ..Self::default()
        }
    }

    pub fn enabled(&self) -> bool {
        self.p_rated_w > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_rated_w >= 0.0) {
            return Err(Error::Config("bess p_rated_w must be non-negative".into()));
        }
        if !(self.e_rated_wh > 0.0) {
            return Err(Error::Config("bess e_rated_wh must be positive".into()));
        }
        for (name, v) in [("eta_charge", self.eta_charge), ("eta_discharge", self.eta_discharge)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("bess {name} must lie in (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.soc_init) {
            return Err(Error::Config("bess soc_init must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Feasible power window `(min, max)` in W for one step from `soc`.
    /// Positive is discharge.
    pub fn power_window(&self, soc: f64, dt: f64) -> (f64, f64) {
        if !self.enabled() {
            return (0.0, 0.0);
        }
        let joules = self.e_rated_wh * 3600.0;
        let discharge = (soc * joules * self.eta_discharge / dt).min(self.p_rated_w);
        let charge = ((1.0 - soc) * joules / (self.eta_charge * dt)).min(self.p_rated_w);
        (-charge.max(0.0), discharge.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BessStep {
    pub soc: f64,
    pub p_actual: f64,
    /// The command was cut by the rating or by the state of charge.
    pub clamped: bool,
}

/// Advances the battery by `dt` seconds under command `p_cmd` (W, + = discharge).
pub fn step_bess(cfg: &BessConfig, soc: f64, p_cmd: f64, dt: f64) -> BessStep {
    let soc = soc.clamp(0.0, 1.0);
    let (lo, hi) = cfg.power_window(soc, dt);
    let p = p_cmd.clamp(lo, hi);
    if p == 0.0 {
        return BessStep {
            soc,
            p_actual: 0.0,
            clamped: p_cmd != 0.0,
        };
    }
    let eta_dir = if p > 0.0 {
        cfg.eta_discharge
    } else {
        1.0 / cfg.eta_charge
    };
    let next = soc - p * dt / (3600.0 * cfg.e_rated_wh * eta_dir);
    BessStep {
        soc: next.clamp(0.0, 1.0),
        p_actual: p,
        clamped: p != p_cmd,
    }
}

/// Everything the plant needs besides the hill chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub gvo: ServoConfig,
    pub rba: ServoConfig,
    /// Lag of the converter speed loop, s.
    pub speed_time_constant: f64,
    pub speed_min_rpm: f64,
    pub speed_max_rpm: f64,
    pub electrical: ElectricalChain,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            gvo: ServoConfig::guide_vanes(),
            rba: ServoConfig::blades(),
            speed_time_constant: 1.0,
            speed_min_rpm: 500.0,
            speed_max_rpm: 1500.0,
            electrical: ElectricalChain::default(),
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.gvo.validate("gvo")?;
        self.rba.validate("rba")?;
        self.electrical.validate()?;
        if !(self.speed_time_constant >= 0.0) {
            return Err(Error::Config("speed_time_constant must be non-negative".into()));
        }
        if !(self.speed_min_rpm > 0.0 && self.speed_min_rpm < self.speed_max_rpm) {
            return Err(Error::Config("speed range must satisfy 0 < min < max".into()));
        }
        Ok(())
    }
}

/// References handed from the governor to the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorRefs {
    pub alpha: f64,
    pub beta: f64,
    /// rev/s
    pub n: f64,
    /// W, + = discharge
    pub p_bess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub gvo: ServoState,
    pub rba: ServoState,
    /// rev/s
    pub n: f64,
    pub head: f64,
    pub q: f64,
    pub t_shaft: f64,
    pub t_blade: f64,
    pub p_h: f64,
    pub p_m: f64,
    /// Electrical output of the hydro unit, W.
    pub p_hydro: f64,
    pub p_pcc: f64,
    pub soc: f64,
    pub p_bess: f64,
    pub eta_h: f64,
}

/// One scenario's plant: configuration, machine, battery and state.
#[derive(Debug, Clone)]
pub struct Plant {
    cfg: PlantConfig,
    chart: GroundTruthHillChart,
    mode: SpeedMode,
    bess: BessConfig,
    state: PlantState,
}

impl Plant {
    /// Plant at rest in the given actuator position, hydraulics evaluated.
    pub fn new(
        cfg: PlantConfig,
        chart: GroundTruthHillChart,
        mode: SpeedMode,
        bess: BessConfig,
        head: f64,
        initial: ActuatorRefs,
    ) -> Result<Self> {
        cfg.validate()?;
        bess.validate()?;
        if !(head > 0.0) {
            return Err(Error::Config(format!("head must be positive, got {head}")));
        }
        let n = match mode {
            SpeedMode::Fixed => chart.geometry().n_rated,
            SpeedMode::VarSpeed => initial.n,
        };
        let mut state = PlantState {
            gvo: cfg.gvo.at(initial.alpha),
            rba: cfg.rba.at(initial.beta),
            n,
            head,
            q: 0.0,
            t_shaft: 0.0,
            t_blade: 0.0,
            p_h: 0.0,
            p_m: 0.0,
            p_hydro: 0.0,
            p_pcc: 0.0,
            soc: bess.soc_init,
            p_bess: 0.0,
            eta_h: 0.0,
        };
        let mut plant = Self {
            cfg,
            chart,
            mode,
            bess,
            state,
        };
        plant.clamp_speed();
        state = hydraulics(&plant.state, &plant.chart, plant.mode, &plant.cfg.electrical)?;
        plant.state = state;
        Ok(plant)
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn chart(&self) -> &GroundTruthHillChart {
        &self.chart
    }

    pub fn mode(&self) -> SpeedMode {
        self.mode
    }

    pub fn bess(&self) -> &BessConfig {
        &self.bess
    }

    fn speed_limits(&self) -> (f64, f64) {
        (
            rpm_to_rev_s(self.cfg.speed_min_rpm),
            rpm_to_rev_s(self.cfg.speed_max_rpm),
        )
    }

    fn clamp_speed(&mut self) {
        if self.mode == SpeedMode::VarSpeed {
            let (lo, hi) = self.speed_limits();
            self.state.n = self.state.n.clamp(lo, hi);
        }
    }

    /// Advances actuators, speed, hydraulics and battery by `dt`.
    pub fn step(&mut self, refs: &ActuatorRefs, dt: f64) -> Result<&PlantState> {
        let mut s = self.state;
        s.gvo = step_servo(&s.gvo, refs.alpha, dt);
        s.rba = step_servo(&s.rba, refs.beta, dt);
        s.n = match self.mode {
            SpeedMode::Fixed => self.chart.geometry().n_rated,
            SpeedMode::VarSpeed => {
                let (lo, hi) = self.speed_limits();
                let target = refs.n.clamp(lo, hi);
                let tau = self.cfg.speed_time_constant;
                if tau > 0.0 {
                    s.n + (target - s.n) * -(-dt / tau).exp_m1()
                } else {
                    target
                }
            }
        };
        let mut s = hydraulics(&s, &self.chart, self.mode, &self.cfg.electrical)?;
        let b = step_bess(&self.bess, s.soc, refs.p_bess, dt);
        s.soc = b.soc;
        s.p_bess = b.p_actual;
        s.p_pcc = s.p_hydro + s.p_bess;
        self.state = s;
        Ok(&self.state)
    }
}

/// Evaluates discharge, powers and torques at the state's actuator
/// positions and speed. Battery fields and `p_pcc` are carried over with the
/// new hydro output.
pub fn hydraulics(
    state: &PlantState,
    chart: &GroundTruthHillChart,
    mode: SpeedMode,
    chain: &ElectricalChain,
) -> Result<PlantState> {
    let geometry: &TurbineGeometry = chart.geometry();
    let (alpha, beta, head) = (state.gvo.position, state.rba.position, state.head);
    let n_ed = speed_coefficient(state.n, geometry.diameter_m, head)?;
    let q = chart.discharge(alpha, beta, n_ed, head)?;
    let eta_h = chart.eta(alpha, beta, n_ed)?;
    let p_h = hydraulic_power(q, head);
    let p_m = eta_h * p_h;
    let omega = angular_speed(state.n);
    let t_shaft = if omega > 0.0 { p_m / omega } else { 0.0 };
    let t_blade = chart.blade_torque(alpha, beta, n_ed, head)?;
    let p_hydro = electrical_power(p_m, mode, chain);
    Ok(PlantState {
        q,
        t_shaft,
        t_blade,
        p_h,
        p_m,
        p_hydro,
        p_pcc: p_hydro + state.p_bess,
        eta_h,
        ..*state
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hillchart::HillChartParams;

    fn chart() -> GroundTruthHillChart {
        GroundTruthHillChart::new(HillChartParams::default(), TurbineGeometry::default()).unwrap()
    }

    fn servo(rate: f64, tau: f64) -> ServoState {
        ServoConfig {
            rate_limit: rate,
            time_constant: tau,
            min: 0.0,
            max: 30.0,
        }
        .at(10.0)
    }

    #[test]
    fn servo_fixed_point() {
        let s = servo(2.0, 0.2);
        assert_eq!(step_servo(&s, 10.0, 0.02), s);
    }

    #[test]
    fn servo_rate_limit_binds() {
        let s = servo(1.0, 0.1);
        let next = step_servo(&s, 25.0, 1.0);
        assert_eq!(next.position, 11.0);
        let next = step_servo(&s, -5.0, 1.0);
        assert_eq!(next.position, 9.0);
    }

    #[test]
    fn servo_settles_at_travel_limit() {
        let mut s = servo(2.0, 0.2);
        for _ in 0..2000 {
            s = step_servo(&s, 45.0, 0.02);
        }
        assert!((s.position - 30.0).abs() < 1e-9);
    }

    #[test]
    fn electrical_chain_examples() {
        let c = ElectricalChain::default();
        assert!((electrical_power(47_124.0, SpeedMode::Fixed, &c) - 44_767.8).abs() < 1e-6);
        assert!((electrical_power(47_124.0, SpeedMode::VarSpeed, &c) - 43_424.77).abs() < 0.01);
        assert_eq!(electrical_power(0.0, SpeedMode::VarSpeed, &c), 0.0);
    }

    fn lossless(p: f64, e: f64) -> BessConfig {
        BessConfig {
            eta_charge: 1.0,
            eta_discharge: 1.0,
            ..BessConfig::rated(p, e)
        }
    }

    #[test]
    fn bess_full_discharge() {
        let b = step_bess(&lossless(5000.0, 5000.0), 1.0, 5000.0, 3600.0);
        assert_eq!(b.p_actual, 5000.0);
        assert_eq!(b.soc, 0.0);
        assert!(!b.clamped);
    }

    #[test]
    fn bess_empty_cannot_discharge() {
        let b = step_bess(&lossless(5000.0, 5000.0), 0.0, 1000.0, 3600.0);
        assert_eq!(b.p_actual, 0.0);
        assert!(b.clamped);
    }

    #[test]
    fn bess_rating_clamp() {
        let b = step_bess(&lossless(5000.0, 5000.0), 0.5, 12_000.0, 1.0);
        assert_eq!(b.p_actual, 5000.0);
        assert!(b.clamped);
    }

    #[test]
    fn bess_charge_losses() {
        let cfg = BessConfig {
            eta_charge: 0.9,
            ..lossless(5000.0, 5000.0)
        };
        // one hour at -1 kW stores 0.9 kWh
        let b = step_bess(&cfg, 0.5, -1000.0, 3600.0);
        assert!((b.soc - (0.5 + 0.9 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn disabled_bess_is_inert() {
        let b = step_bess(&BessConfig::disabled(), 0.5, 3000.0, 0.02);
        assert_eq!((b.soc, b.p_actual), (0.5, 0.0));
    }

    fn plant(mode: SpeedMode, alpha: f64, beta: f64, n: f64) -> Plant {
        Plant::new(
            PlantConfig::default(),
            chart(),
            mode,
            BessConfig::disabled(),
            10.0,
            ActuatorRefs {
                alpha,
                beta,
                n,
                p_bess: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn closed_vanes_produce_nothing() {
        let p = plant(SpeedMode::Fixed, 0.0, 18.0, 25.0);
        let s = p.state();
        assert_eq!((s.q, s.p_m, s.t_shaft), (0.0, 0.0, 0.0));
    }

    #[test]
    fn bep_efficiency_is_chart_peak() {
        let p = plant(SpeedMode::Fixed, 20.0, 18.0, 25.0);
        assert!((p.state().eta_h - 0.92).abs() < 1e-12);
        assert!((p.state().q - p.chart().discharge_bep()).abs() < 1e-12);
    }

    #[test]
    fn fixed_speed_is_pinned() {
        let mut p = plant(SpeedMode::Fixed, 10.0, 15.0, 25.0);
        let refs = ActuatorRefs {
            alpha: 12.0,
            beta: 15.0,
            n: 10.0,
            p_bess: 0.0,
        };
        for _ in 0..100 {
            p.step(&refs, 0.02).unwrap();
        }
        assert_eq!(p.state().n, 25.0);
    }

    #[test]
    fn variable_speed_converges_monotonically() {
        let mut p = plant(SpeedMode::VarSpeed, 10.0, 18.0, 25.0);
        let target = rpm_to_rev_s(1000.0);
        let refs = ActuatorRefs {
            alpha: 10.0,
            beta: 18.0,
            n: target,
            p_bess: 0.0,
        };
        let mut last = p.state().n;
        for _ in 0..1000 {
            let n = p.step(&refs, 0.02).unwrap().n;
            assert!(n <= last && n >= target);
            last = n;
        }
        assert!((last - target).abs() < 1e-6);
    }

    #[test]
    fn pcc_balance() {
        let mut p = Plant::new(
            PlantConfig::default(),
            chart(),
            SpeedMode::Fixed,
            BessConfig::default(),
            10.0,
            ActuatorRefs {
                alpha: 10.0,
                beta: 15.0,
                n: 25.0,
                p_bess: 0.0,
            },
        )
        .unwrap();
        let s = *p
            .step(
                &ActuatorRefs {
                    alpha: 11.0,
                    beta: 15.5,
                    n: 25.0,
                    p_bess: 2500.0,
                },
                0.02,
            )
            .unwrap();
        assert_eq!(s.p_bess, 2500.0);
        assert_eq!(
            s.p_pcc,
            electrical_power(s.p_m, SpeedMode::Fixed, &ElectricalChain::default()) + s.p_bess
        );
    }
}
