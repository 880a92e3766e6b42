//! Scenario orchestration: configuration, the offline pipeline (training
//! set, surrogate, CAM tables), the closed-loop run and batch execution.
//!
//! All four test cases of a batch see the same frequency series. Runs share
//! only immutable inputs, so they execute on separate threads and produce the
//! same bits as a sequential run.

pub mod compare;
pub mod frequency;
pub mod plot;
pub mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cam::{build_kaplan_cam, build_varspeed_cam, CamGrid, CamTable};
use crate::control::{ControllerConfig, Governor, GovernorConfig, GovernorMode};
use crate::error::{Error, Result};
use crate::hillchart::{generate_training_set, GridSpec, GroundTruthHillChart, HillChartParams, HillChartSample};
use crate::kpi::{compute_report, KpiConfig, KpiReport, Trace, TraceSample};
use crate::physics::{DroopConfig, TurbineGeometry};
use crate::plant::{BessConfig, Plant, PlantConfig, SpeedMode};
use crate::surrogate::{fit, EfficiencySurrogate, FitConfig, Smoothing};

pub use compare::{compare_scenarios, Comparison};
pub use frequency::{load_frequency_csv, synthesize_frequency, FrequencySeries, SynthConfig};

/// The four test configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioMode {
    #[serde(rename = "only_hydro")]
    OnlyHydro,
    #[serde(rename = "hybrid_5kw")]
    Hybrid5,
    #[serde(rename = "hybrid_9kw")]
    Hybrid9,
    #[serde(rename = "var_speed")]
    VarSpeed,
}

impl ScenarioMode {
    pub const ALL: [ScenarioMode; 4] = [
        ScenarioMode::OnlyHydro,
        ScenarioMode::Hybrid5,
        ScenarioMode::Hybrid9,
        ScenarioMode::VarSpeed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioMode::OnlyHydro => "only_hydro",
            ScenarioMode::Hybrid5 => "hybrid_5kw",
            ScenarioMode::Hybrid9 => "hybrid_9kw",
            ScenarioMode::VarSpeed => "var_speed",
        }
    }

    pub fn speed_mode(self) -> SpeedMode {
        match self {
            ScenarioMode::VarSpeed => SpeedMode::VarSpeed,
            _ => SpeedMode::Fixed,
        }
    }

    pub fn governor_mode(self) -> GovernorMode {
        match self {
            ScenarioMode::OnlyHydro => GovernorMode::OnlyHydro,
            ScenarioMode::Hybrid5 | ScenarioMode::Hybrid9 => GovernorMode::HybridBess,
            ScenarioMode::VarSpeed => GovernorMode::VarSpeed,
        }
    }
}

impl fmt::Display for ScenarioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode `{s}` (expected one of only_hydro, hybrid_5kw, hybrid_9kw, var_speed)"
                ))
            })
    }
}

/// Training data and MARS settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub noise_sd: f64,
    pub grid: GridSpec,
    pub max_terms: usize,
    pub max_degree: usize,
    pub gcv_penalty: f64,
    pub holdout_modulus: u64,
    pub min_gain: f64,
    /// Evaluation mode used for CAM synthesis.
    pub smoothing: Smoothing,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            noise_sd: 0.003,
            grid: GridSpec::default(),
            max_terms: fit.max_terms,
            max_degree: fit.max_degree,
            gcv_penalty: fit.gcv_penalty,
            holdout_modulus: fit.holdout_modulus,
            min_gain: fit.min_gain,
            smoothing: Smoothing::CubicC1,
        }
    }
}

impl SurrogateConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_terms: self.max_terms,
            max_degree: self.max_degree,
            gcv_penalty: self.gcv_penalty,
            holdout_modulus: self.holdout_modulus,
            smoothing: self.smoothing,
            min_gain: self.min_gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CamConfig {
    /// Blade angle of the fixed-blade runner, deg.
    pub fixed_beta_deg: f64,
    pub grid: CamGrid,
}

impl Default for CamConfig {
    fn default() -> Self {
        Self {
            fixed_beta_deg: 18.0,
            grid: CamGrid::default(),
        }
    }
}

/// Battery ratings of the two hybrid cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BessSection {
    pub small: BessConfig,
    pub large: BessConfig,
}

impl Default for BessSection {
    fn default() -> Self {
        Self {
            small: BessConfig::rated(5_000.0, 5_000.0),
            large: BessConfig::rated(9_000.0, 9_000.0),
        }
    }
}

/// Where the frequency comes from. A `path` overrides the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencyConfig {
    pub path: Option<PathBuf>,
    pub synthetic: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub p_disp_w: f64,
    pub head_m: f64,
    pub seed: u64,
    /// Control and plant step, s.
    pub dt_s: f64,
    pub log_interval_s: f64,
    /// Time held at nominal frequency before logging starts, so the run
    /// opens with the integrator settled, s.
    pub settle_s: f64,
    pub modes: Vec<ScenarioMode>,
    pub frequency: FrequencyConfig,
    pub droop: DroopConfig,
    pub geometry: TurbineGeometry,
    pub hillchart: HillChartParams,
    pub surrogate: SurrogateConfig,
    pub cam: CamConfig,
    pub plant: PlantConfig,
    pub bess: BessSection,
    pub controller: ControllerConfig,
    pub kpi: KpiConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_s: 43_200.0,
            p_disp_w: 27_000.0,
            head_m: 10.0,
            seed: 42,
            dt_s: 0.02,
            log_interval_s: 1.0,
            settle_s: 120.0,
            modes: ScenarioMode::ALL.to_vec(),
            frequency: FrequencyConfig::default(),
            droop: DroopConfig::default(),
            geometry: TurbineGeometry::default(),
            hillchart: HillChartParams::default(),
            surrogate: SurrogateConfig::default(),
            cam: CamConfig::default(),
            plant: PlantConfig::default(),
            bess: BessSection::default(),
            controller: ControllerConfig::default(),
            kpi: KpiConfig::default(),
        }
    }
}

/// Whole steps of `dt` in `interval`, or an error when it is not a multiple.
fn steps_in(interval: f64, dt: f64, what: &str) -> Result<u64> {
    let r = interval / dt;
    let k = r.round();
    if !(k >= 1.0) || (r - k).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "{what} ({interval} s) must be a whole multiple of dt_s ({dt} s)"
        )));
    }
    Ok(k as u64)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, label: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: label.to_string(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration_s must be positive".into()));
        }
        if !(self.dt_s > 0.0) {
            return Err(Error::Config("dt_s must be positive".into()));
        }
        steps_in(self.log_interval_s, self.dt_s, "log_interval_s")?;
        if !(self.settle_s >= 0.0) {
            return Err(Error::Config("settle_s must be non-negative".into()));
        }
        if !(self.p_disp_w >= 0.0) {
            return Err(Error::Config("p_disp_w must be non-negative".into()));
        }
        if !(self.head_m > 0.0) {
            return Err(Error::Config("head_m must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("modes must name at least one scenario".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return Err(Error::Config(format!("mode {m} listed twice")));
            }
        }
        self.droop.validate()?;
        self.geometry.validate()?;
        self.surrogate.fit_config().validate()?;
        if !(self.surrogate.noise_sd >= 0.0) {
            return Err(Error::Config("surrogate noise_sd must be non-negative".into()));
        }
        self.cam.grid.validate()?;
        self.plant.validate()?;
        self.bess.small.validate()?;
        self.bess.large.validate()?;
        self.controller.split.validate()?;
        self.kpi.validate()?;
        self.frequency.synthetic.validate()?;
        Ok(())
    }

    pub fn bess_for(&self, mode: ScenarioMode) -> BessConfig {
        match mode {
            ScenarioMode::Hybrid5 => self.bess.small,
            ScenarioMode::Hybrid9 => self.bess.large,
            _ => BessConfig::disabled(),
        }
    }

    /// Frequency input: the configured CSV, else the seeded generator.
    pub fn frequency_series(&self) -> Result<FrequencySeries> {
        match &self.frequency.path {
            Some(p) => load_frequency_csv(p),
            None => synthesize_frequency(&self.frequency.synthetic, self.seed, self.duration_s),
        }
    }
}

/// Offline products shared by every scenario of a batch.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub chart: GroundTruthHillChart,
    pub surrogate: EfficiencySurrogate,
    pub kaplan: CamTable,
    pub varspeed: CamTable,
}

impl Pipeline {
    pub fn chart(cfg: &ScenarioConfig) -> Result<GroundTruthHillChart> {
        GroundTruthHillChart::new(cfg.hillchart.clone(), cfg.geometry)
    }

    pub fn training_set(cfg: &ScenarioConfig, chart: &GroundTruthHillChart) -> Result<Vec<HillChartSample>> {
        generate_training_set(chart, &cfg.surrogate.grid, cfg.surrogate.noise_sd, cfg.seed)
    }

    /// Samples the chart, fits the surrogate and builds both CAM tables.
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        let chart = Self::chart(cfg)?;
        let samples = Self::training_set(cfg, &chart)?;
        let surrogate = fit(&samples, &cfg.surrogate.fit_config())?;
        Self::with_surrogate(cfg, chart, surrogate)
    }

    /// Builds the CAM tables from an existing surrogate, evaluated in the
    /// configured smoothing mode.
    pub fn with_surrogate(
        cfg: &ScenarioConfig,
        chart: GroundTruthHillChart,
        surrogate: EfficiencySurrogate,
    ) -> Result<Self> {
        let surrogate = surrogate.with_smoothing(cfg.surrogate.smoothing);
        let kaplan = build_kaplan_cam(&surrogate, &chart, cfg.head_m, cfg.geometry.n_rated, &cfg.cam.grid)?;
        let varspeed = build_varspeed_cam(&surrogate, &chart, cfg.head_m, cfg.cam.fixed_beta_deg, &cfg.cam.grid)?;
        Ok(Self {
            chart,
            surrogate,
            kaplan,
            varspeed,
        })
    }

    pub fn cam_for(&self, mode: ScenarioMode) -> &CamTable {
        match mode {
            ScenarioMode::VarSpeed => &self.varspeed,
            _ => &self.kaplan,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub mode: ScenarioMode,
    pub trace: Trace,
    pub report: KpiReport,
}

/// Closed-loop run of one test case. Logs every `log_interval_s` and
/// evaluates the KPIs on the log.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    pipeline: &Pipeline,
    mode: ScenarioMode,
    freq: &FrequencySeries,
) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let dt = cfg.dt_s;
    let per_log = steps_in(cfg.log_interval_s, dt, "log_interval_s")?;
    let n_logs = (cfg.duration_s / cfg.log_interval_s).round() as usize;
    if n_logs < 2 {
        return Err(Error::Config("run is shorter than two logging intervals".into()));
    }
    let covered = freq.start_s + freq.span_s();
    if freq.start_s > 1e-9 || covered + 1e-6 < cfg.duration_s {
        return Err(Error::Config(format!(
            "frequency series covers [{}, {covered}) s but the run needs [0, {}) s",
            freq.start_s, cfg.duration_s
        )));
    }

    let speed_mode = mode.speed_mode();
    let bess = cfg.bess_for(mode);
    let gov_cfg = GovernorConfig {
        droop: cfg.droop,
        mode: mode.governor_mode(),
        cam: pipeline.cam_for(mode).clone(),
        pi: cfg.controller.pi,
        chain_efficiency: cfg.plant.electrical.efficiency(speed_mode),
        alpha_limits: (cfg.plant.gvo.min, cfg.plant.gvo.max),
        n_rated: cfg.geometry.n_rated,
        split: cfg.controller.split,
        bess,
    };
    let mut governor = Governor::new(gov_cfg, cfg.p_disp_w)?;
    let start = governor.operating_point(cfg.p_disp_w);
    let mut plant = Plant::new(
        cfg.plant.clone(),
        pipeline.chart.clone(),
        speed_mode,
        bess,
        cfg.head_m,
        start,
    )?;

    let settle_steps = (cfg.settle_s / dt).round() as u64;
    for k in 0..settle_steps {
        let t = (k as f64 - settle_steps as f64) * dt;
        let state = *plant.state();
        let out = governor.step(cfg.droop.f_nom, cfg.p_disp_w, &state, t, dt);
        plant.step(&out.refs, dt)?;
    }

    let mut trace = Trace::with_capacity(n_logs);
    let mut step: u64 = 0;
    for k in 1..=n_logs {
        let mut logged = (0.0, 0.0);
        for _ in 0..per_log {
            let t = step as f64 * dt;
            let f = freq.at(t);
            let state = *plant.state();
            let out = governor.step(f, cfg.p_disp_w, &state, t, dt);
            plant.step(&out.refs, dt)?;
            logged = (f, out.p_set);
            step += 1;
        }
        let s = plant.state();
        trace.push(TraceSample {
            time_s: k as f64 * cfg.log_interval_s,
            frequency_hz: logged.0,
            p_set_w: logged.1,
            p_pcc_w: s.p_pcc,
            p_bess_w: s.p_bess,
            gvo_deg: s.gvo.position,
            rba_deg: s.rba.position,
            rbt_nm: s.t_blade,
            discharge_m3s: s.q,
            head_m: s.head,
            shaft_torque_nm: s.t_shaft,
            speed_rev_s: s.n,
            soc: s.soc,
        });
    }
    let report = compute_report(&trace, &cfg.kpi, mode.as_str())?;
    Ok(ScenarioOutcome { mode, trace, report })
}

/// Runs every configured mode on `freq`, one thread per mode. Results come
/// back in configuration order.
pub fn run_batch(cfg: &ScenarioConfig, pipeline: &Pipeline, freq: &FrequencySeries) -> Result<Vec<ScenarioOutcome>> {
    cfg.validate()?;
    let results: Vec<Result<ScenarioOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .modes
            .iter()
            .map(|&mode| scope.spawn(move || run_scenario(cfg, pipeline, mode, freq)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Config("scenario thread panicked".into())))
            })
            .collect()
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_roundtrip() {
        for m in ScenarioMode::ALL {
            assert_eq!(m.as_str().parse::<ScenarioMode>().unwrap(), m);
        }
        assert!("kaplan".parse::<ScenarioMode>().is_err());
    }

    #[test]
    fn default_config_roundtrips_through_toml() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text, "x").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let e = ScenarioConfig::from_toml("duration_s = 10.0\n\n[plant]\ngvo_rate = 3\n", "c.toml").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert!(line >= 3, "{line}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = ScenarioConfig::from_toml(
            "duration_s = 600.0\nmodes = [\"var_speed\"]\n[bess.small]\np_rated_w = 4000.0\n",
            "c",
        )
        .unwrap();
        assert_eq!(cfg.duration_s, 600.0);
        assert_eq!(cfg.modes, vec![ScenarioMode::VarSpeed]);
        assert_eq!(cfg.bess.small.p_rated_w, 4000.0);
        assert_eq!(cfg.bess.small.e_rated_wh, 5000.0);
        assert_eq!(cfg.p_disp_w, 27_000.0);
    }

    #[test]
    fn log_interval_must_divide() {
        let cfg = ScenarioConfig {
            log_interval_s: 0.03,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
