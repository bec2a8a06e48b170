use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use phtrack_core::cert::{latin_hypercube, seeded_rng, DomainBox};
use phtrack_core::controllers::ControllerKind;
use phtrack_core::linalg;
use phtrack_core::ph::annihilator_of;
use phtrack_core::scenarios::{BallOnWheelParams, FullyActuatedParams, Scenario, ScenarioConfig};
use phtrack_core::sim::{convergence_fit, DisturbanceSchedule, SimulationTrace};
use phtrack_core::table::Table;

fn ball() -> &'static Scenario {
    static S: OnceLock<Scenario> = OnceLock::new();
    S.get_or_init(|| ScenarioConfig::BallOnWheel(BallOnWheelParams::default()).assemble().unwrap())
}

fn extension_design() -> &'static Scenario {
    static S: OnceLock<Scenario> = OnceLock::new();
    S.get_or_init(|| {
        ScenarioConfig::FullyActuated(FullyActuatedParams::with_controller(ControllerKind::NoVelocity))
            .assemble()
            .unwrap()
    })
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn input_of(s: &Scenario, t: f64, q: &DVector<f64>, p: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    s.design.input(&s.system, &s.reference, t, q, p, c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn velocity_free_inputs_ignore_momentum(
        q in vector(2, 2.0), c in vector(2, 5.0), p1 in vector(2, 10.0), p2 in vector(2, 10.0), t in 0.0..4.9f64,
    ) {
        let s = ball();
        prop_assert_eq!(input_of(s, t, &q, &p1, &c), input_of(s, t, &q, &p2, &c));
        let rates = (
            s.design.controller_rate(t, &q, &p1, &c).unwrap(),
            s.design.controller_rate(t, &q, &p2, &c).unwrap(),
        );
        prop_assert_eq!(rates.0, rates.1);
    }

    #[test]
    fn extension_inputs_ignore_momentum(
        q in vector(2, 2.0), c in vector(4, 5.0), p1 in vector(2, 10.0), p2 in vector(2, 10.0), t in 0.0..9.9f64,
    ) {
        let s = extension_design();
        prop_assert_eq!(input_of(s, t, &q, &p1, &c), input_of(s, t, &q, &p2, &c));
    }

    #[test]
    fn annihilator_spans_unactuated_directions(entries in prop::collection::vec(-3.0..3.0f64, 6)) {
        let g = DMatrix::from_column_slice(3, 2, &entries);
        prop_assume!(linalg::singular_values(&g).into_iter().fold(f64::INFINITY, f64::min) > 1e-3);
        let a = annihilator_of(&g).unwrap();
        prop_assert_eq!(a.perp.shape(), (1, 3));
        prop_assert!((&a.perp * &g).amax() < 1e-10);
        prop_assert!((&a.dagger * &g - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn latin_hypercube_points_stay_in_the_box(seed in any::<u64>(), n in 1usize..50) {
        let domain = DomainBox::new(vec![-3.0, 0.5, -30.0], vec![3.0, 0.6, 30.0]).unwrap();
        let pts = latin_hypercube(&domain, n, &mut seeded_rng(seed));
        prop_assert_eq!(pts.len(), n);
        for p in &pts {
            prop_assert!(domain.contains(p));
        }
        prop_assert_eq!(pts, latin_hypercube(&domain, n, &mut seeded_rng(seed)));
    }

    #[test]
    fn tables_return_nodes_and_reproduce_cubics(
        coeffs in prop::collection::vec(-2.0..2.0f64, 4), step in 0.01..0.5f64, frac in 0.0..1.0f64,
    ) {
        let f = |t: f64| DVector::from_element(1, coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3])));
        let table = Table::tabulate(f, 0.0, 20.0 * step, step).unwrap();
        for k in 0..table.len() {
            prop_assert_eq!(table.eval(table.time(k)).unwrap(), table.row(k).clone());
        }
        let t = frac * table.end();
        prop_assert!((table.eval(t).unwrap()[0] - f(t)[0]).abs() < 1e-9);
    }

    #[test]
    fn disturbance_is_an_exact_step(onset in 0.0..5.0f64, d in -50.0..50.0f64, t in 0.0..10.0f64) {
        let s = DisturbanceSchedule::new(onset, DVector::from_element(1, d), 0.0).unwrap();
        let expected = if t >= onset { d } else { 0.0 };
        prop_assert_eq!(s.at(t)[0], expected);
    }

    #[test]
    fn convergence_fit_recovers_exponential_rates(rate in 0.1..5.0f64, scale in 1e-3..1.0f64) {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let trace = |offset: f64| SimulationTrace {
            n: 1,
            m: 1,
            k: 0,
            q: times.iter().map(|t| DVector::from_element(1, offset * (-rate * t).exp())).collect(),
            p: times.iter().map(|_| DVector::zeros(1)).collect(),
            c: times.iter().map(|_| DVector::zeros(0)).collect(),
            u: times.iter().map(|_| DVector::zeros(1)).collect(),
            d_active: vec![false; times.len()],
            err_q: vec![0.0; times.len()],
            err_full: vec![0.0; times.len()],
            times: times.clone(),
        };
        let fit = convergence_fit(&trace(scale), &trace(0.0), (0.5, 4.0)).unwrap();
        prop_assert!((fit.rate + rate).abs() < 1e-6);
        prop_assert!(fit.r2 > 0.999);
        let same = convergence_fit(&trace(scale), &trace(scale), (0.5, 4.0)).unwrap();
        prop_assert_eq!(same.rate, f64::NEG_INFINITY);
    }

    #[test]
    fn closed_loop_matrices_keep_their_skew_part(kind in prop::sample::select(vec![
        ControllerKind::NoVelocity, ControllerKind::Robust, ControllerKind::RobustNoVelocity,
    ])) {
        // The (q, p) block of every closed-loop matrix is [[0, J], [−Jᵀ, ·]].
        let s = ScenarioConfig::FullyActuated(FullyActuatedParams::with_controller(kind)).assemble().unwrap();
        let p = s.design.closed_loop_matrix();
        let j = p.view((0, 2), (2, 2)).into_owned();
        prop_assert!((p.view((2, 0), (2, 2)) + j.transpose()).amax() < 1e-15);
        prop_assert!(p.view((0, 0), (2, 2)).amax() == 0.0);
    }
}
