//! Feasible reference trajectories `(x⋆, u⋆)` of a mechanical plant.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::MechanicalPH;
use crate::table::{Table, TimeMap};

/// Step for central differences of tabulated reference signals.
pub const DERIVATIVE_STEP: f64 = 1e-4;

/// Scalar signal with its first two derivatives.
pub trait Signal: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn rate(&self, t: f64) -> f64;
    fn accel(&self, t: f64) -> f64;
}

/// `offset + amplitude·sin(omega·t + phase)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub offset: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, omega: f64) -> Self {
        Sinusoid {
            amplitude,
            omega,
            phase: 0.0,
            offset: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Sinusoid {
            amplitude: 0.0,
            omega: 0.0,
            phase: 0.0,
            offset: value,
        }
    }
}

impl Signal for Sinusoid {
    fn value(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * t + self.phase).sin()
    }
    fn rate(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t + self.phase).cos()
    }
    fn accel(&self, t: f64) -> f64 {
        -self.amplitude * self.omega * self.omega * (self.omega * t + self.phase).sin()
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub t0: f64,
    pub tf: f64,
    pub step: f64,
    pub q_star: TimeMap,
    pub p_star: TimeMap,
    pub q_star_dot: Option<TimeMap>,
    pub p_star_dot: TimeMap,
    pub u_star: TimeMap,
    pub aux: BTreeMap<String, TimeMap>,
    pub b0: f64,
    pub b1: f64,
}

impl ReferenceTrajectory {
    pub fn dof(&self) -> usize {
        self.q_star.dim()
    }

    pub fn q(&self, t: f64) -> Result<DVector<f64>> {
        self.q_star.eval(t)
    }

    pub fn p(&self, t: f64) -> Result<DVector<f64>> {
        self.p_star.eval(t)
    }

    pub fn p_dot(&self, t: f64) -> Result<DVector<f64>> {
        self.p_star_dot.eval(t)
    }

    pub fn u(&self, t: f64) -> Result<DVector<f64>> {
        self.u_star.eval(t)
    }

    /// `q̇⋆`, analytic when available.
    pub fn q_dot(&self, t: f64) -> Result<DVector<f64>> {
        match &self.q_star_dot {
            Some(map) => map.eval(t),
            None => self.q_star.derivative(t, DERIVATIVE_STEP),
        }
    }

    pub fn aux(&self, name: &str) -> Result<&TimeMap> {
        self.aux
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("reference has no `{name}` signal")))
    }

    pub fn aux_at(&self, name: &str, t: f64) -> Result<DVector<f64>> {
        self.aux(name)?.eval(t)
    }

    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.tf - self.t0) / self.step - 1e-9).ceil().max(0.0) as usize + 1;
        (0..count)
            .map(|k| self.t0 + k as f64 * self.step)
            .collect()
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.t0 - 1e-12 && t <= self.tf + 1e-12
    }
}

/// Constant inertia entries and gravity coefficient of the ball-on-wheel
/// plant: `M = [[m1, m2], [m2, m3]]`, `V = m4·cos q1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl WheelConstants {
    /// `m1·m3 − m2²`
    pub fn det(&self) -> f64 {
        self.m1 * self.m3 - self.m2 * self.m2
    }
}

fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn pair(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// Closed-form reference with the ball angle following `a(t)`.
///
/// With `F(t) = ∫ m4·sin a` and `FF(t) = ∫ F`, both by nested cumulative
/// Simpson quadrature on the grid:
///
/// * `q⋆ = (a, FF/m2 + b0·(t−t0)/m2 − (m1/m2)a + b1)`
/// * `p⋆ = (F + b0, (m3/m2)(F + b0) − (Δ/m2)ȧ)` with `Δ = m1m3 − m2²`
/// * `u⋆ = (m3/m2)m4·sin a − (Δ/m2)ä`
///
/// The `b0·t` term and the absence of `b0` in `u⋆` follow from
/// `q̇⋆ = M⁻¹p⋆` and `ṗ⋆₂ = u⋆`; the `b0` dependence is physical, not the
/// printed one.
pub fn ball_on_wheel_reference(
    c: &WheelConstants,
    a: &dyn Signal,
    b0: f64,
    b1: f64,
    t0: f64,
    tf: f64,
    dt: f64,
) -> Result<ReferenceTrajectory> {
    if c.m2.abs() < 1e-15 {
        return Err(Error::Degenerate("m2 = 0 decouples the wheel from the ball".into()));
    }
    if !(dt > 0.0) || !(tf >= t0) {
        return Err(Error::Invalid(format!("bad reference grid [{t0}, {tf}] step {dt}")));
    }
    let count = ((tf - t0) / dt - 1e-9).ceil().max(0.0) as usize + 1;
    let f = |t: f64| c.m4 * a.value(t).sin();
    let mut big_f = vec![0.0; count];
    let mut big_ff = vec![0.0; count];
    for k in 0..count - 1 {
        let t = t0 + k as f64 * dt;
        let (f0, f1, f2, f4) = (f(t), f(t + 0.25 * dt), f(t + 0.5 * dt), f(t + dt));
        let half = big_f[k] + dt / 12.0 * (f0 + 4.0 * f1 + f2);
        big_f[k + 1] = big_f[k] + dt / 6.0 * (f0 + 4.0 * f2 + f4);
        big_ff[k + 1] = big_ff[k] + dt / 6.0 * (big_f[k] + 4.0 * half + big_f[k + 1]);
    }
    let (m1, m2, m3) = (c.m1, c.m2, c.m3);
    let delta = c.det();
    let node = |k: usize| t0 + k as f64 * dt;
    let rows = |g: &dyn Fn(usize, f64) -> DVector<f64>| -> Vec<DVector<f64>> {
        (0..count).map(|k| g(k, node(k))).collect()
    };
    let q = rows(&|k, t| {
        pair(
            a.value(t),
            big_ff[k] / m2 + b0 * (t - t0) / m2 - m1 / m2 * a.value(t) + b1,
        )
    });
    let p = rows(&|k, t| {
        let p1 = big_f[k] + b0;
        pair(p1, m3 / m2 * p1 - delta / m2 * a.rate(t))
    });
    let qd = rows(&|k, t| pair(a.rate(t), (big_f[k] + b0) / m2 - m1 / m2 * a.rate(t)));
    let pd = rows(&|_, t| {
        let s = c.m4 * a.value(t).sin();
        pair(s, m3 / m2 * s - delta / m2 * a.accel(t))
    });
    let u = rows(&|_, t| scalar(m3 / m2 * c.m4 * a.value(t).sin() - delta / m2 * a.accel(t)));
    let table = |r: Vec<DVector<f64>>| -> Result<TimeMap> { Ok(TimeMap::table(Table::from_rows(t0, dt, r)?)) };
    Ok(ReferenceTrajectory {
        t0,
        tf,
        step: dt,
        q_star: table(q)?,
        p_star: table(p)?,
        q_star_dot: Some(table(qd)?),
        p_star_dot: table(pd)?,
        u_star: table(u)?,
        aux: BTreeMap::new(),
        b0,
        b1,
    })
}

/// Per-axis reference `q⋆_i = s_i(t)` for a constant-inertia plant whose
/// input matrix spans the required forces; `u⋆ = G†(ṗ⋆ + ∇V(q⋆))`.
pub fn signal_reference(
    sys: &MechanicalPH,
    signals: &[Sinusoid],
    t0: f64,
    tf: f64,
    dt: f64,
) -> Result<ReferenceTrajectory> {
    let n = sys.dof();
    if signals.len() != n {
        return Err(Error::dim("reference signals", n, signals.len()));
    }
    if !sys.inertia().is_constant() {
        return Err(Error::Invalid("signal references need a constant inertia matrix".into()));
    }
    let m = sys.inertia().matrix(&DVector::zeros(n));
    let pos = |t: f64| DVector::from_iterator(n, signals.iter().map(|s| s.value(t)));
    let vel = |t: f64| DVector::from_iterator(n, signals.iter().map(|s| s.rate(t)));
    let acc = |t: f64| DVector::from_iterator(n, signals.iter().map(|s| s.accel(t)));
    let dagger = sys.annihilator().dagger.clone();
    let tab = |g: &dyn Fn(f64) -> DVector<f64>| -> Result<TimeMap> {
        Ok(TimeMap::table(Table::tabulate(g, t0, tf, dt)?))
    };
    let force = |t: f64| &m * acc(t) + sys.potential().gradient(&pos(t));
    Ok(ReferenceTrajectory {
        t0,
        tf,
        step: dt,
        q_star: tab(&pos)?,
        p_star: tab(&|t| &m * vel(t))?,
        q_star_dot: Some(tab(&vel)?),
        p_star_dot: tab(&|t| &m * acc(t))?,
        u_star: tab(&|t| &dagger * force(t))?,
        aux: BTreeMap::new(),
        b0: 0.0,
        b1: 0.0,
    })
}

/// Constant reference at `q_eq` with zero momentum, held by `u⋆ = G†∇V(q_eq)`.
pub fn equilibrium_reference(sys: &MechanicalPH, q_eq: &DVector<f64>, t0: f64, tf: f64, dt: f64) -> Result<ReferenceTrajectory> {
    let n = sys.dof();
    if q_eq.len() != n {
        return Err(Error::dim("equilibrium", n, q_eq.len()));
    }
    let u = &sys.annihilator().dagger * sys.potential().gradient(q_eq);
    Ok(ReferenceTrajectory {
        t0,
        tf,
        step: dt,
        q_star: TimeMap::Constant(q_eq.clone()),
        p_star: TimeMap::Constant(DVector::zeros(n)),
        q_star_dot: Some(TimeMap::Constant(DVector::zeros(n))),
        p_star_dot: TimeMap::Constant(DVector::zeros(n)),
        u_star: TimeMap::Constant(u),
        aux: BTreeMap::new(),
        b0: 0.0,
        b1: 0.0,
    })
}

/// Fourth-order five-point difference with step `h`: central where the
/// stencil fits in the reference window, one-sided near its ends, else
/// the map's own derivative.
fn stencil_derivative(map: &TimeMap, reference: &ReferenceTrajectory, t: f64, h: f64) -> Result<DVector<f64>> {
    let f = |s: f64| map.eval(t + s * h);
    if reference.covers(t - 2.0 * h) && reference.covers(t + 2.0 * h) {
        return Ok((f(-2.0)? - f(-1.0)? * 8.0 + f(1.0)? * 8.0 - f(2.0)?) / (12.0 * h));
    }
    for dir in [1.0, -1.0] {
        if reference.covers(t + 4.0 * dir * h) {
            let d = f(0.0)? * -25.0 + f(dir)? * 48.0 - f(2.0 * dir)? * 36.0 + f(3.0 * dir)? * 16.0 - f(4.0 * dir)? * 3.0;
            return Ok(d / (12.0 * h * dir));
        }
    }
    map.derivative(t, DERIVATIVE_STEP)
}

/// Max over `times` of `‖ẋ⋆ − F∇H(x⋆) − g u⋆‖∞`, with `ẋ⋆` taken by
/// five-point differences of the stored `q⋆` and `p⋆` over the grid
/// step, so the quadrature itself is checked.
pub fn feasibility_residual(sys: &MechanicalPH, reference: &ReferenceTrajectory, times: &[f64]) -> Result<f64> {
    let zero = DVector::zeros(sys.inputs());
    let mut worst = 0.0_f64;
    for &t in times {
        let q = reference.q(t)?;
        let p = reference.p(t)?;
        let qd = stencil_derivative(&reference.q_star, reference, t, reference.step)?;
        let pd = stencil_derivative(&reference.p_star, reference, t, reference.step)?;
        let (fq, fp) = sys.open_loop_vector_field(&q, &p, &reference.u(t)?, &zero)?;
        worst = worst
            .max(linalg::max_abs_vec(&(qd - fq)))
            .max(linalg::max_abs_vec(&(pd - fp)));
    }
    Ok(worst)
}

/// Max over `times` of `‖p⋆ − M(q⋆)q̇⋆‖∞`.
pub fn momentum_residual(sys: &MechanicalPH, reference: &ReferenceTrajectory, times: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &t in times {
        let q = reference.q(t)?;
        let m: DMatrix<f64> = sys.inertia().matrix(&q);
        worst = worst.max(linalg::max_abs_vec(&(reference.p(t)? - m * reference.q_dot(t)?)));
    }
    Ok(worst)
}

/// Max over `times` of `‖ṗ⋆ − (−∇_qH(x⋆) + G u⋆)‖∞` using the stored
/// `ṗ⋆`.
pub fn momentum_rate_residual(sys: &MechanicalPH, reference: &ReferenceTrajectory, times: &[f64]) -> Result<f64> {
    let zero = DVector::zeros(sys.inputs());
    let mut worst = 0.0_f64;
    for &t in times {
        let (_, fp) = sys.open_loop_vector_field(&reference.q(t)?, &reference.p(t)?, &reference.u(t)?, &zero)?;
        worst = worst.max(linalg::max_abs_vec(&(reference.p_dot(t)? - fp)));
    }
    Ok(worst)
}
