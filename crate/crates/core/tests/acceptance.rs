//! One PASS/FAIL line per acceptance criterion. The target fails if any
//! criterion fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use common::{fd_gradient, fd_jacobian, random_vector, rel_err_mat, rel_err_vec, rng};
use phtrack_core::controllers::potentials::{AnchoredPotential, CoupledPotential, UnderactuatedPotential};
use phtrack_core::controllers::ControllerKind;
use phtrack_core::ph::{Cosine, Linear, ScalarField};
use phtrack_core::reference;
use phtrack_core::scenarios::{BallOnWheelParams, FullyActuatedParams, Scenario, ScenarioConfig};
use phtrack_core::sim::{self, convergence_fit, rk4_step, DisturbanceSchedule, Gate, SimulationTrace};
use phtrack_core::table::TimeMap;

const CERT_RUNTIME: Duration = Duration::from_secs(30);
const SIM_RUNTIME: Duration = Duration::from_secs(10);
const TRACKING_TOL: f64 = 0.05;
const REJECTION_TOL: f64 = 1e-3;
const PERTURBATION: f64 = 0.1;
const FIT_WINDOW: (f64, f64) = (0.5, 5.0);
const FIT_R2: f64 = 0.9;
const FEEDFORWARD_TOL: f64 = 1e-6;
const MOMENTUM_DRAWS: usize = 100;
const MATCHING_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-6;
const GRADIENT_TOL: f64 = 1e-5;
const GRADIENT_POINTS: usize = 100;
const OFFSET_RATIO: f64 = 10.0;

type Outcome = (bool, String);

fn ball() -> Scenario {
    ScenarioConfig::BallOnWheel(BallOnWheelParams::default()).assemble().unwrap()
}

fn fully_actuated(kind: ControllerKind) -> Scenario {
    ScenarioConfig::FullyActuated(FullyActuatedParams::with_controller(kind)).assemble().unwrap()
}

fn ball_certification() -> Outcome {
    let s = ball();
    let start = Instant::now();
    let cert = s.certify().unwrap();
    let elapsed = start.elapsed();
    let bounds_ok = cert.bounds.as_ref().is_some_and(|b| 0.0 < b.alpha && b.alpha < b.beta);
    let ok = cert.verdict.passed()
        && cert.abscissa < -1e-9
        && bounds_ok
        && cert.epsilon_found.is_some()
        && elapsed < CERT_RUNTIME;
    (
        ok,
        format!(
            "verdict {:?}; abscissa {:.3e}; bounds {:?}; epsilon {:?}; {:.2?}",
            cert.verdict,
            cert.abscissa,
            cert.bounds.as_ref().map(|b| (b.alpha, b.beta)),
            cert.epsilon_found,
            elapsed
        ),
    )
}

fn angle_error(trace: &SimulationTrace, from: f64, to: f64) -> f64 {
    trace
        .times
        .iter()
        .zip(&trace.q)
        .filter(|(t, _)| **t >= from - 1e-12 && **t <= to + 1e-12)
        .map(|(t, q)| (q[0] - 2.5 * (4.0 * t).sin()).abs())
        .fold(0.0, f64::max)
}

fn tracking_reproduction() -> Outcome {
    let s = ball();
    let start = Instant::now();
    let trace = s.simulate(Gate::Unsafe);
    let elapsed = start.elapsed();
    let trace = match trace {
        Ok(t) => t,
        Err(e) => return (false, format!("simulation failed: {e}")),
    };
    let end = s.t0 + s.horizon;
    let onset = s.schedule.onset;
    let post = angle_error(&trace, end - 1.0, end);
    let pre = angle_error(&trace, onset - 0.3, onset - s.dt);
    let ok = s.horizon == 5.0 && s.dt == 1e-3 && onset == 0.8 && post < TRACKING_TOL && (post - pre).abs() < REJECTION_TOL && elapsed < SIM_RUNTIME;
    (
        ok,
        format!("final-second max |q1 - a| {post:.4e}; pre-onset {pre:.4e}; difference {:.4e}; {elapsed:.2?}", (post - pre).abs()),
    )
}

fn contraction_property() -> Outcome {
    let s = ball();
    let a = s.simulate(Gate::Unsafe);
    let x1 = s.perturbed_initial_state(s.seed + 1).unwrap();
    let moved = (&x1 - s.initial_state().unwrap()).norm();
    let b = s.simulate_from(&x1, Gate::Unsafe);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let fit = convergence_fit(&a, &b, FIT_WINDOW).unwrap();
            let ok = (moved - PERTURBATION).abs() < 1e-12 && fit.rate < 0.0 && fit.r2 > FIT_R2;
            (ok, format!("slope {:.4}; r2 {:.4}; perturbation {moved:.3}", fit.rate, fit.r2))
        }
        (Err(e), _) | (_, Err(e)) => (false, format!("simulation failed: {e}")),
    }
}

fn feedforward_exactness() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for kind in [ControllerKind::NoVelocity, ControllerKind::Robust, ControllerKind::RobustNoVelocity] {
        let s = fully_actuated(kind);
        let none = DisturbanceSchedule::none(s.system.inputs());
        let cl = s.closed_loop_with(&none).unwrap();
        let x0 = cl.matched_initial_state(s.t0).unwrap();
        let worst = sim::simulate(&cl, &x0, s.t0, s.horizon, s.dt, Gate::Unsafe)
            .map(|t| t.err_full.iter().cloned().fold(0.0, f64::max))
            .unwrap_or(f64::INFINITY);
        ok &= worst < FEEDFORWARD_TOL;
        details.push(format!("{kind} {worst:.2e}"));
    }
    (ok, format!("max full-state error: {}", details.join(", ")))
}

fn velocity_independence() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (label, s) in [
        ("ball robust_no_velocity", ball()),
        ("2dof no_velocity", fully_actuated(ControllerKind::NoVelocity)),
        ("2dof robust_no_velocity", fully_actuated(ControllerKind::RobustNoVelocity)),
    ] {
        let mut r = rng(7);
        let n = s.system.dof();
        let k = s.design.controller_dim();
        let q = random_vector(&mut r, n, 1.0);
        let c = random_vector(&mut r, k, 1.0);
        let t = 0.37;
        let base = s.design.input(&s.system, &s.reference, t, &q, &DVector::zeros(n), &c).unwrap();
        let same = (0..MOMENTUM_DRAWS).all(|_| {
            let p = random_vector(&mut r, n, 10.0);
            s.design.input(&s.system, &s.reference, t, &q, &p, &c).unwrap() == base
        });
        ok &= same;
        details.push(format!("{label} {}", if same { "identical" } else { "differs" }));
    }
    (ok, details.join(", "))
}

fn matching_and_feasibility() -> Outcome {
    let s = ball();
    let report = s.matching_report().unwrap();
    let grid = s.reference.grid();
    let feasibility = reference::feasibility_residual(&s.system, &s.reference, &grid).unwrap();
    let ok = report.max() < MATCHING_TOL && feasibility < FEASIBILITY_TOL;
    (
        ok,
        format!(
            "matching {:.2e} over {} samples; feasibility {feasibility:.2e} over {} nodes",
            report.max(),
            phtrack_core::scenarios::MATCHING_SAMPLES,
            grid.len()
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let params = BallOnWheelParams::default();
    let (l1, l2) = params.lambdas().unwrap();
    let phi1 = Cosine {
        coefficient: l1,
        index: 0,
        dim: 2,
    };
    let fields: Vec<Box<dyn ScalarField>> = vec![Box::new(phi1.clone()), Box::new(Linear::new(&[l2, 1.0]))];
    let mut r = rng(99);
    let mut worst = 0.0_f64;
    for f in &fields {
        for _ in 0..GRADIENT_POINTS {
            let x = random_vector(&mut r, 2, 3.0);
            worst = worst.max(rel_err_vec(&f.gradient(&x), &fd_gradient(|y| f.value(y), &x, 1e-6)));
            worst = worst.max(rel_err_mat(&f.hessian(&x), &fd_jacobian(|y| f.gradient(y), &x, 1e-6)));
        }
    }
    let vd3 = UnderactuatedPotential::new(
        params.design.k1,
        params.design.k2,
        Arc::new(phi1),
        Arc::new(Linear::new(&[l2, 1.0])),
        Arc::new(Linear::new(&[1.0])),
    )
    .unwrap()
    .with_anchor(TimeMap::function(1, |t| DVector::from_element(1, t.cos())));
    for _ in 0..GRADIENT_POINTS {
        let x = random_vector(&mut r, 3, 3.0);
        let (q, z) = (x.rows(0, 2).into_owned(), x.rows(2, 1).into_owned());
        let t = 1.3;
        let value = |y: &DVector<f64>| vd3.value(&y.rows(0, 2).into_owned(), &y.rows(2, 1).into_owned(), t).unwrap();
        let grad = |y: &DVector<f64>| {
            let (a, b) = (y.rows(0, 2).into_owned(), y.rows(2, 1).into_owned());
            let gq = vd3.grad_q(&a, &b, t).unwrap();
            let gz = vd3.grad_w(&a, &b, t).unwrap();
            DVector::from_vec(vec![gq[0], gq[1], gz[0]])
        };
        worst = worst.max(rel_err_vec(&grad(&x), &fd_gradient(value, &x, 1e-6)));
        worst = worst.max(rel_err_mat(&vd3.hessian(&q, &z, t).unwrap(), &fd_jacobian(grad, &x, 1e-6)));
    }

    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.4]);
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let mut f = |_t: f64, x: &DVector<f64>| Ok(&a * x);
    let local = |dt: f64, f: &mut dyn FnMut(f64, &DVector<f64>) -> phtrack_core::Result<DVector<f64>>| {
        let mut g = |t: f64, x: &DVector<f64>| f(t, x);
        (rk4_step(&mut g, 0.0, &x0, dt, 0).unwrap() - (&a * dt).exp() * &x0).norm()
    };
    let ratio = local(0.1, &mut f) / local(0.05, &mut f);
    let ok = worst < GRADIENT_TOL && (24.0..40.0).contains(&ratio);
    (ok, format!("worst relative gradient error {worst:.2e}; rk4 local error ratio for dt/2 {ratio:.1} (O(dt^5) gives 32)"))
}

fn negative_control() -> Outcome {
    let steady = |kind: ControllerKind| -> f64 {
        let s = fully_actuated(kind);
        let end = s.t0 + s.horizon;
        s.simulate(Gate::Unsafe).unwrap().max_err_q(end - 1.0, end).unwrap()
    };
    let offset = steady(ControllerKind::NoVelocity);
    let robust = steady(ControllerKind::Robust);
    let robust_vf = steady(ControllerKind::RobustNoVelocity);
    let ok = offset > OFFSET_RATIO * robust && offset > OFFSET_RATIO * robust_vf;
    (
        ok,
        format!("non-robust offset {offset:.3e}; robust {robust:.3e}; robust velocity-free {robust_vf:.3e}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("ball-on-wheel certification", ball_certification),
        ("tracking reproduction", tracking_reproduction),
        ("contraction property", contraction_property),
        ("feedforward exactness", feedforward_exactness),
        ("velocity independence", velocity_independence),
        ("matching and feasibility gates", matching_and_feasibility),
        ("oracle equivalence", oracle_equivalence),
        ("negative control", negative_control),
    ];
    let mut failed = Vec::new();
    println!();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        println!("{} {}. {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
        if !ok {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
