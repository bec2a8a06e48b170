mod common;

use std::path::PathBuf;

use nalgebra::DVector;

use phtrack_core::cert::Verdict;
use phtrack_core::controllers::ControllerKind;
use phtrack_core::error::Error;
use phtrack_core::scenarios::{
    build_ball_on_wheel, build_fully_actuated_2dof, BallOnWheelParams, FullyActuatedParams, Scenario, ScenarioConfig,
};
use phtrack_core::sim::{self, DisturbanceSchedule, Gate};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn shipped(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(&std::fs::read_to_string(config_path(name)).unwrap()).unwrap()
}

fn fully_actuated(kind: ControllerKind) -> ScenarioConfig {
    ScenarioConfig::FullyActuated(FullyActuatedParams::with_controller(kind))
}

const KINDS: [ControllerKind; 3] = [ControllerKind::NoVelocity, ControllerKind::Robust, ControllerKind::RobustNoVelocity];

#[test]
fn shipped_configs_equal_the_defaults() {
    assert_eq!(shipped("ball_on_wheel.toml").assemble().unwrap().x0_offset, {
        let s = ScenarioConfig::BallOnWheel(BallOnWheelParams::default()).assemble().unwrap();
        s.x0_offset
    });
    let ball = shipped("ball_on_wheel.toml");
    let ScenarioConfig::BallOnWheel(p) = &ball else { panic!("wrong scenario") };
    let d = BallOnWheelParams::default();
    assert_eq!(p.plant, d.plant);
    assert_eq!(p.design, d.design);
    assert_eq!(p.reference, d.reference);
    assert_eq!(p.disturbance, d.disturbance);
    assert_eq!(p.domain, d.domain);

    let fa = shipped("fully_actuated_2dof.toml");
    let ScenarioConfig::FullyActuated(p) = &fa else { panic!("wrong scenario") };
    let d = FullyActuatedParams::default();
    assert_eq!(p.plant, d.plant);
    assert_eq!(p.design, d.design);
    assert_eq!(p.reference, d.reference);
    assert_eq!(p.disturbance, d.disturbance);
}

#[test]
fn table_one_names_are_config_keys() {
    let text = std::fs::read_to_string(config_path("ball_on_wheel.toml")).unwrap();
    for key in [
        "I_w", "m_b", "r_b", "g_r", "r_w", "a1", "a2", "a3", "k1", "k2", "K_z", "Gamma11", "Gamma12", "Gamma21",
        "Gamma22", "Gamma33", "d",
    ] {
        assert!(text.lines().any(|l| l.trim_start().starts_with(&format!("{key} ="))), "{key}");
    }
    for section in ["[plant]", "[design]", "[reference]", "[disturbance]", "[sim]", "[domain]"] {
        assert!(text.contains(section), "{section}");
    }
}

#[test]
fn unknown_keys_and_scenarios_are_rejected() {
    let bad_key = "scenario = \"ball_on_wheel\"\n[plant]\nI_wheel = 1.0\n";
    assert!(matches!(ScenarioConfig::from_toml_str(bad_key), Err(Error::Config(_))));
    let bad_id = "scenario = \"cart_pole\"\n";
    assert!(matches!(ScenarioConfig::from_toml_str(bad_id), Err(Error::Config(_))));
    assert!(matches!(ScenarioConfig::from_toml_str("seed = 1\n"), Err(Error::Config(_))));
    assert!(matches!(ScenarioConfig::from_toml_str("scenario = "), Err(Error::Config(_))));
    let bad_controller = "scenario = \"fully_actuated_2dof\"\n[design]\ncontroller = \"pid\"\n";
    let cfg = ScenarioConfig::from_toml_str(bad_controller).unwrap();
    assert!(matches!(cfg.assemble(), Err(Error::Config(_))));
}

#[test]
fn partial_sections_keep_the_other_defaults() {
    let cfg = ScenarioConfig::from_toml_str("scenario = \"ball_on_wheel\"\n[sim]\ndt = 5e-4\n").unwrap();
    let s = cfg.assemble().unwrap();
    assert_eq!(s.dt, 5e-4);
    assert_eq!(s.horizon, 5.0);
    assert_eq!(s.x0_offset[0], 0.05);
}

#[test]
fn default_ball_on_wheel_passes_the_residual_gates() {
    let s = build_ball_on_wheel(&BallOnWheelParams::default()).unwrap();
    let g = s.gates().unwrap();
    assert!(g.matching.max() < 1e-10, "{:?}", g.matching);
    assert!(g.feasibility < 1e-6);
    assert!(g.momentum < 1e-8);
}

#[test]
fn indefinite_desired_inertia_is_named() {
    let mut p = BallOnWheelParams::default();
    p.design.a2 = 0.1;
    let err = build_ball_on_wheel(&p).unwrap_err();
    assert!(err.to_string().contains("M_d not positive definite"), "{err}");
}

#[test]
fn perturbed_lambda_fails_the_matching_gate() {
    let mut p = BallOnWheelParams::default();
    p.design.lambda1 = Some(p.lambdas().unwrap().0 * 1.01);
    match build_ball_on_wheel(&p) {
        Err(Error::Gate { gate, value, .. }) => {
            assert_eq!(gate, "matching.potential");
            assert!(value > 1e-8);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn zero_gamma33_fails_certification_by_name() {
    let mut p = BallOnWheelParams::default();
    p.design.gamma33 = 0.0;
    let s = ScenarioConfig::BallOnWheel(p).assemble().unwrap();
    let cert = s.certify().unwrap();
    match cert.verdict {
        Verdict::Fail { condition, reason } => {
            assert_eq!(condition, "Gamma33 positive definite");
            assert!(reason.contains("Gamma33"));
        }
        Verdict::Pass => panic!("certified with Gamma33 = 0"),
    }
}

#[test]
fn coupling_free_wheel_is_degenerate() {
    let mut p = BallOnWheelParams::default();
    p.plant.r_w = 0.0;
    assert!(build_ball_on_wheel(&p).is_err());
}

#[test]
fn fully_actuated_matching_is_trivial() {
    for kind in KINDS {
        let ScenarioConfig::FullyActuated(p) = fully_actuated(kind) else { unreachable!() };
        let s = build_fully_actuated_2dof(&p).unwrap();
        assert_eq!(s.system.annihilator().perp.nrows(), 0);
        assert!(s.matching_report().unwrap().max() < 1e-12, "{kind}");
    }
}

#[test]
fn fully_actuated_designs_with_measured_or_extended_damping_certify() {
    for kind in [ControllerKind::NoVelocity, ControllerKind::Robust] {
        let s = fully_actuated(kind).build().unwrap();
        let cert = s.certify().unwrap();
        assert!(cert.verdict.passed(), "{kind}: {:?}", cert.verdict);
    }
}

fn nominal_run(s: &Scenario) -> sim::SimulationTrace {
    let none = DisturbanceSchedule::none(s.system.inputs());
    let cl = s.closed_loop_with(&none).unwrap();
    let x0 = cl.matched_initial_state(s.t0).unwrap();
    sim::simulate(&cl, &x0, s.t0, s.horizon, s.dt, Gate::Unsafe).unwrap()
}

#[test]
fn zero_disturbance_run_stays_on_the_reference() {
    for kind in KINDS {
        let s = fully_actuated(kind).build().unwrap();
        let trace = nominal_run(&s);
        let worst = trace.err_full.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-6, "{kind}: {worst:e}");
    }
}

#[test]
fn open_loop_energy_is_conserved() {
    let s = ScenarioConfig::BallOnWheel(BallOnWheelParams::default()).assemble().unwrap();
    let sys = &s.system;
    let zero = DVector::zeros(1);
    let mut f = |_t: f64, x: &DVector<f64>| {
        let (qd, pd) = sys.open_loop_vector_field(&x.rows(0, 2).into_owned(), &x.rows(2, 2).into_owned(), &zero, &zero)?;
        Ok(DVector::from_iterator(4, qd.iter().chain(pd.iter()).copied()))
    };
    let energy = |x: &DVector<f64>| sys.hamiltonian(&x.rows(0, 2).into_owned(), &x.rows(2, 2).into_owned()).unwrap();
    let mut x = DVector::from_vec(vec![0.3, -0.2, 0.001, -0.002]);
    let h0 = energy(&x);
    let dt = 1e-3;
    for k in 0..1000 {
        x = sim::rk4_step(&mut f, k as f64 * dt, &x, dt, k).unwrap();
    }
    assert!((energy(&x) - h0).abs() < 1e-8, "{}", energy(&x) - h0);
}

fn step_halving_change(cfg: &ScenarioConfig) -> f64 {
    let s = cfg.assemble().unwrap();
    let a = s.simulate(Gate::Unsafe).unwrap().last_state().unwrap();
    let mut fine = cfg.clone();
    fine.sim_mut().dt = Some(s.dt / 2.0);
    let b = fine.assemble().unwrap().simulate(Gate::Unsafe).unwrap().last_state().unwrap();
    (&a - &b).norm() / a.norm()
}

#[test]
fn step_halving_fully_actuated() {
    for kind in KINDS {
        let change = step_halving_change(&fully_actuated(kind));
        assert!(change < 1e-6, "{kind}: {change:e}");
    }
}

#[test]
fn step_halving_ball_on_wheel() {
    let change = step_halving_change(&ScenarioConfig::BallOnWheel(BallOnWheelParams::default()));
    assert!(change < 1e-6, "{change:e}");
}

fn steady_errors(cfg: &ScenarioConfig, horizon: f64) -> (f64, f64) {
    let mut cfg = cfg.clone();
    cfg.sim_mut().horizon = Some(horizon);
    let s = cfg.assemble().unwrap();
    let disturbed = s.simulate(Gate::Unsafe).unwrap();
    let none = DisturbanceSchedule::none(s.system.inputs());
    let cl = s.closed_loop_with(&none).unwrap();
    let clean = sim::simulate(&cl, &s.initial_state().unwrap(), s.t0, horizon, s.dt, Gate::Unsafe).unwrap();
    let window = (horizon - 1.0, horizon);
    (
        disturbed.max_err_q(window.0, window.1).unwrap(),
        clean.max_err_q(window.0, window.1).unwrap(),
    )
}

#[test]
fn robust_designs_reject_the_disturbance() {
    for (kind, horizon) in [(ControllerKind::Robust, 10.0), (ControllerKind::RobustNoVelocity, 20.0)] {
        let (with_d, without) = steady_errors(&fully_actuated(kind), horizon);
        assert!((with_d - without).abs() < 1e-4, "{kind}: {with_d:e} vs {without:e}");
    }
}

#[test]
fn non_robust_design_keeps_an_offset() {
    let (with_d, without) = steady_errors(&fully_actuated(ControllerKind::NoVelocity), 10.0);
    assert!(with_d - without > 0.1, "{with_d:e} vs {without:e}");
}

#[test]
fn simulation_is_deterministic() {
    let s = fully_actuated(ControllerKind::RobustNoVelocity).build().unwrap();
    let a = s.simulate(Gate::Unsafe).unwrap();
    let b = s.simulate(Gate::Unsafe).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uncertified_designs_need_the_override() {
    let s = ScenarioConfig::BallOnWheel(BallOnWheelParams::default()).assemble().unwrap();
    let cert = s.certify().unwrap();
    assert!(!cert.verdict.passed());
    assert!(matches!(s.simulate(Gate::Certified(&cert)), Err(Error::Uncertified(_))));
}

#[test]
fn zero_horizon_gives_an_empty_trace() {
    let mut cfg = fully_actuated(ControllerKind::Robust);
    cfg.sim_mut().horizon = Some(0.0);
    let s = cfg.assemble().unwrap();
    assert!(s.simulate(Gate::Unsafe).unwrap().is_empty());
}
