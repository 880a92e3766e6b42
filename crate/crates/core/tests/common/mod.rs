//! Shared fixtures and the property suites run by both the `invariants`
//! and `acceptance` targets.

#![allow(dead_code)]

use std::sync::OnceLock;

use hydrofcr::control::{Governor, GovernorConfig, HybridSplit, HybridSplitConfig};
use hydrofcr::kpi::{compute_report, KpiConfig, KpiReport, Trace, TraceSample};
use hydrofcr::plant::{step_bess, step_servo, ActuatorRefs, BessConfig, Plant, ServoState};
use hydrofcr::scenario::{Pipeline, ScenarioConfig, ScenarioMode};
use hydrofcr::surrogate::Smoothing;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const CASES: u32 = 1000;

pub fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| Pipeline::build(&ScenarioConfig::default()).expect("default pipeline"))
}

/// Fixed-seed runner so a failure reproduces on every machine.
pub fn runner() -> TestRunner {
    let cfg = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

pub fn governor_config(cfg: &ScenarioConfig, mode: ScenarioMode) -> GovernorConfig {
    let p = pipeline();
    GovernorConfig {
        droop: cfg.droop,
        mode: mode.governor_mode(),
        cam: p.cam_for(mode).clone(),
        pi: cfg.controller.pi,
        chain_efficiency: cfg.plant.electrical.efficiency(mode.speed_mode()),
        alpha_limits: (cfg.plant.gvo.min, cfg.plant.gvo.max),
        n_rated: cfg.geometry.n_rated,
        split: cfg.controller.split,
        bess: cfg.bess_for(mode),
    }
}

fn mode() -> impl Strategy<Value = ScenarioMode> {
    prop::sample::select(ScenarioMode::ALL.to_vec())
}

fn bess() -> impl Strategy<Value = BessConfig> {
    (
        0.0..20_000.0f64,
        0.1..20_000.0f64,
        0.7..=1.0f64,
        0.7..=1.0f64,
        0.0..=1.0f64,
    )
        .prop_map(|(p, e, c, d, soc)| BessConfig {
            p_rated_w: p,
            e_rated_wh: e,
            eta_charge: c,
            eta_discharge: d,
            soc_init: soc,
        })
}

/// State of charge stays in [0, 1] and power inside the rating for any
/// command sequence.
pub fn soc_bounds() -> Result<(), String> {
    let cmds = prop::collection::vec((-60_000.0..60_000.0f64, 0.001..600.0f64), 1..60);
    check((bess(), cmds), |(cfg, cmds)| {
        let mut soc = cfg.soc_init;
        for (p, dt) in cmds {
            let s = step_bess(&cfg, soc, p, dt);
            prop_assert!((0.0..=1.0).contains(&s.soc), "soc {}", s.soc);
            prop_assert!(
                s.p_actual.abs() <= cfg.p_rated_w,
                "p {} > {}",
                s.p_actual,
                cfg.p_rated_w
            );
            if s.p_actual > 0.0 {
                prop_assert!(s.soc <= soc);
            }
            if s.p_actual < 0.0 {
                prop_assert!(s.soc >= soc);
            }
            soc = s.soc;
        }
        Ok(())
    })
}

/// P_pcc equals hydro plus battery output after every plant step.
pub fn pcc_balance() -> Result<(), String> {
    let refs = prop::collection::vec(
        (-5.0..35.0f64, -5.0..35.0f64, 5.0..30.0f64, -30_000.0..30_000.0f64),
        1..30,
    );
    check((mode(), bess(), refs), |(mode, bess, refs)| {
        let cfg = ScenarioConfig::default();
        let start = ActuatorRefs {
            alpha: 20.0,
            beta: 18.0,
            n: 25.0,
            p_bess: 0.0,
        };
        let mut plant = Plant::new(
            cfg.plant.clone(),
            pipeline().chart.clone(),
            mode.speed_mode(),
            bess,
            cfg.head_m,
            start,
        )
        .unwrap();
        for (alpha, beta, n, p_bess) in refs {
            let s = *plant.step(&ActuatorRefs { alpha, beta, n, p_bess }, 0.02).unwrap();
            prop_assert_eq!(s.p_pcc, s.p_hydro + s.p_bess);
            prop_assert!(s.p_bess.abs() <= bess.p_rated_w);
        }
        Ok(())
    })
}

fn within_ulps(a: f64, b: f64, ulps: f64) -> bool {
    (a - b).abs() <= ulps * f64::EPSILON * a.abs().max(b.abs()).max(1.0)
}

/// Hydro and battery references add back up to the set-point, both in the
/// bare split and in the governor after the battery window clamp.
pub fn split_identity() -> Result<(), String> {
    let inputs = prop::collection::vec((10_000.0..50_000.0f64, 0.0..=1.0f64), 1..80);
    let split_cfg = (1e-4..0.1f64, 0.1..0.9f64, 1.0..600.0f64, 0.0..50_000.0f64);
    check(
        (split_cfg, inputs, 0.001..5.0f64),
        |((fc, target, period, gain), inputs, dt)| {
            let cfg = HybridSplitConfig {
                lp_cutoff_hz: fc,
                soc_target: target,
                recenter_period_s: period,
                recenter_gain: Some(gain),
            };
            let mut split = HybridSplit::new(cfg, gain, inputs[0].0).unwrap();
            for (k, &(p_set, soc)) in inputs.iter().enumerate() {
                let (h, b) = split.step(p_set, soc, k as f64 * dt, dt);
                prop_assert!(within_ulps(h + b, p_set, 2.0), "{h} + {b} != {p_set}");
            }
            Ok(())
        },
    )?;

    let freqs = prop::collection::vec(49.7..50.3f64, 1..40);
    check(
        (
            prop::sample::select(vec![ScenarioMode::Hybrid5, ScenarioMode::Hybrid9]),
            0.0..=1.0f64,
            freqs,
        ),
        |(mode, soc, freqs)| {
            let cfg = ScenarioConfig::default();
            let mut gov = Governor::new(governor_config(&cfg, mode), cfg.p_disp_w).unwrap();
            let mut state = plant_at_dispatch(&cfg, mode, &gov);
            state.soc = soc;
            for (k, f) in freqs.into_iter().enumerate() {
                let out = gov.step(f, cfg.p_disp_w, &state, k as f64 * 0.02, 0.02);
                prop_assert!(within_ulps(out.p_hydro_ref + out.refs.p_bess, out.p_set, 2.0));
            }
            Ok(())
        },
    )
}

fn plant_at_dispatch(cfg: &ScenarioConfig, mode: ScenarioMode, gov: &Governor) -> hydrofcr::plant::PlantState {
    let plant = Plant::new(
        cfg.plant.clone(),
        pipeline().chart.clone(),
        mode.speed_mode(),
        cfg.bess_for(mode),
        cfg.head_m,
        gov.operating_point(cfg.p_disp_w),
    )
    .unwrap();
    *plant.state()
}

/// Inside the dead band the governor behaves exactly as at nominal
/// frequency: same set-point, same references, step after step.
pub fn dead_band_constancy() -> Result<(), String> {
    let cfg = ScenarioConfig::default();
    let (f_nom, db) = (cfg.droop.f_nom, cfg.droop.dead_band);
    let freqs = prop::collection::vec(f_nom - db..=f_nom + db, 1..50);
    check((mode(), freqs), |(mode, freqs)| {
        let mut a = Governor::new(governor_config(&cfg, mode), cfg.p_disp_w).unwrap();
        let mut b = a.clone();
        let state = plant_at_dispatch(&cfg, mode, &a);
        for (k, f) in freqs.into_iter().enumerate() {
            let t = k as f64 * 0.02;
            let oa = a.step(f, cfg.p_disp_w, &state, t, 0.02);
            let ob = b.step(f_nom, cfg.p_disp_w, &state, t, 0.02);
            prop_assert_eq!(oa.p_set, cfg.p_disp_w);
            prop_assert_eq!(oa.refs, ob.refs);
        }
        Ok(())
    })
}

fn trace() -> impl Strategy<Value = Trace> {
    let row = (
        49.8..50.2f64,
        20_000.0..35_000.0f64,
        -500.0..500.0f64,
        -5_000.0..5_000.0f64,
        0.0..30.0f64,
        0.0..30.0f64,
        -50.0..50.0f64,
        0.05..0.6f64,
    );
    (
        prop::collection::vec(row, 2..400),
        prop::sample::select(vec![0.5, 1.0, 2.0]),
    )
        .prop_map(|(rows, dt)| {
            let mut t = Trace::default();
            for (k, (f, p_set, err, p_bess, gvo, rba, rbt, q)) in rows.into_iter().enumerate() {
                t.push(TraceSample {
                    time_s: (k + 1) as f64 * dt,
                    frequency_hz: f,
                    p_set_w: p_set,
                    p_pcc_w: p_set + err,
                    p_bess_w: p_bess,
                    gvo_deg: gvo,
                    rba_deg: rba,
                    rbt_nm: rbt,
                    discharge_m3s: q,
                    head_m: 10.0,
                    shaft_torque_nm: (p_set + err - p_bess) / (2.0 * std::f64::consts::PI * 25.0 * 0.95),
                    speed_rev_s: 25.0,
                    soc: 0.5,
                });
            }
            t
        })
}

fn same_report(a: &KpiReport, b: &KpiReport) -> bool {
    // compare through JSON so NaN fields count as equal
    a.to_json().unwrap() == b.to_json().unwrap()
}

/// KPI evaluation leaves its input untouched and gives identical reports
/// on repeated calls and on a copy of the trace.
pub fn kpi_purity() -> Result<(), String> {
    let kpi = KpiConfig {
        warmup_s: 0.0,
        ..KpiConfig::default()
    };
    check(trace(), |t| {
        let before = t.clone();
        let a = compute_report(&t, &kpi, "x");
        let b = compute_report(&before.clone(), &kpi, "x");
        prop_assert_eq!(&t, &before);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!(same_report(&a, &b));
                prop_assert!(a.mileage_gvo_deg >= 0.0 && a.mileage_rba_deg >= 0.0);
                prop_assert!(a.rms_te_w >= 0.0 || a.rms_te_w.is_nan());
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "diverged: {a:?} vs {b:?}"),
        }
        Ok(())
    })
}

/// No servo step moves further than `rate_limit·dt` or leaves its travel.
pub fn servo_rate_limit() -> Result<(), String> {
    let servo = (0.01..10.0f64, 0.0..2.0f64, -10.0..10.0f64, 1.0..40.0f64, 0.0..=1.0f64).prop_map(
        |(rate, tau, min, span, at)| ServoState {
            position: min + at * span,
            rate_limit: rate,
            time_constant: tau,
            min,
            max: min + span,
        },
    );
    let steps = prop::collection::vec((-100.0..100.0f64, 1e-4..5.0f64), 1..50);
    check((servo, steps), |(mut s, steps)| {
        for (reference, dt) in steps {
            let next = step_servo(&s, reference, dt);
            let moved = (next.position - s.position).abs();
            // a few ulps of the position absorb the rounding of `position + delta`
            let slack = 4.0 * f64::EPSILON * s.position.abs().max(next.position.abs());
            prop_assert!(moved <= s.rate_limit * dt + slack, "moved {moved} in {dt}");
            prop_assert!(next.position >= s.min && next.position <= s.max);
            s = next;
        }
        Ok(())
    })
}

/// Analytic surrogate gradient against central differences away from knots.
pub fn surrogate_gradient() -> Result<(), String> {
    const H: f64 = 1e-6;
    const CLEAR: f64 = 1e-4;
    let fitted = &pipeline().surrogate;
    let [ra, rb, rn] = fitted.input_ranges();
    let point = (
        ra[0] + CLEAR..ra[1] - CLEAR,
        rb[0] + CLEAR..rb[1] - CLEAR,
        rn[0] + CLEAR..rn[1] - CLEAR,
    );
    for smoothing in [Smoothing::CubicC1, Smoothing::PiecewiseLinear] {
        let model = fitted.with_smoothing(smoothing);
        check(point.clone(), |(a, b, n)| {
            let x = [a, b, n];
            if (0..3).any(|v| model.knot_distance(v, x[v]) < CLEAR) {
                return Ok(());
            }
            let g = model.eval_gradient(a, b, n);
            for v in 0..3 {
                let (mut lo, mut hi) = (x, x);
                lo[v] -= H;
                hi[v] += H;
                let fd = (model.eval(hi[0], hi[1], hi[2]) - model.eval(lo[0], lo[1], lo[2])) / (2.0 * H);
                prop_assert!(
                    (g[v] - fd).abs() <= 1e-5,
                    "{smoothing:?} var {v} at {x:?}: {} vs {fd}",
                    g[v]
                );
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub type Suite = fn() -> Result<(), String>;

pub const SUITES: [(&str, Suite); 7] = [
    ("soc bounds", soc_bounds),
    ("pcc balance", pcc_balance),
    ("split identity", split_identity),
    ("dead-band constancy", dead_band_constancy),
    ("kpi purity", kpi_purity),
    ("servo rate limit", servo_rate_limit),
    ("surrogate gradient", surrogate_gradient),
];
