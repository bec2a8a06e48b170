//! Fixed-step RK4 simulation of plant and controller as one ODE.

use log::debug;
use nalgebra::DVector;

use crate::cert::ContractionCertificate;
use crate::controllers::Design;
use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::MechanicalPH;
use crate::reference::ReferenceTrajectory;

/// State norm beyond which a run counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Classical fourth-order Runge-Kutta step. `step` only labels errors.
pub fn rk4_step<F>(f: &mut F, t: f64, x: &DVector<f64>, dt: f64, step: usize) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut eval = |tt: f64, xx: &DVector<f64>| -> Result<DVector<f64>> {
        let k = f(tt, xx)?;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: tt, step });
        }
        Ok(k)
    };
    let h2 = 0.5 * dt;
    let k1 = eval(t, x)?;
    let k2 = eval(t + h2, &(x + &k1 * h2))?;
    let k3 = eval(t + h2, &(x + &k2 * h2))?;
    let k4 = eval(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Constant matched disturbance switched on at `onset`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSchedule {
    pub onset: f64,
    pub value: DVector<f64>,
}

impl DisturbanceSchedule {
    pub fn new(onset: f64, value: DVector<f64>, t0: f64) -> Result<Self> {
        if !(onset >= t0) {
            return Err(Error::Invalid(format!("disturbance onset {onset} precedes start time {t0}")));
        }
        Ok(DisturbanceSchedule { onset, value })
    }

    pub fn none(m: usize) -> Self {
        DisturbanceSchedule {
            onset: f64::INFINITY,
            value: DVector::zeros(m),
        }
    }

    /// The grid time `k·dt` nearest the onset counts as active even when
    /// rounding puts it a hair early.
    pub fn active(&self, t: f64) -> bool {
        t >= self.onset - 1e-12 * self.onset.abs().max(1.0)
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        if self.active(t) {
            self.value.clone()
        } else {
            DVector::zeros(self.value.len())
        }
    }
}

/// Plant, design, reference and disturbance wired together.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub sys: &'a MechanicalPH,
    pub design: &'a Design,
    pub reference: &'a ReferenceTrajectory,
    pub schedule: &'a DisturbanceSchedule,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        sys: &'a MechanicalPH,
        design: &'a Design,
        reference: &'a ReferenceTrajectory,
        schedule: &'a DisturbanceSchedule,
    ) -> Result<Self> {
        design.validate(sys)?;
        if reference.dof() != sys.dof() {
            return Err(Error::dim("reference", sys.dof(), reference.dof()));
        }
        if schedule.value.len() != sys.inputs() {
            return Err(Error::dim("disturbance", sys.inputs(), schedule.value.len()));
        }
        Ok(ClosedLoop {
            sys,
            design,
            reference,
            schedule,
        })
    }

    pub fn state_dim(&self) -> usize {
        2 * self.sys.dof() + self.design.controller_dim()
    }

    pub fn input(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (q, p, c) = self.design.split_state(x)?;
        self.design.input(self.sys, self.reference, t, &q, &p, &c)
    }

    pub fn rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (q, p, c) = self.design.split_state(x)?;
        let u = self.design.input(self.sys, self.reference, t, &q, &p, &c)?;
        let (qd, pd) = self.sys.open_loop_vector_field(&q, &p, &u, &self.schedule.at(t))?;
        let cd = self.design.controller_rate(t, &q, &p, &c)?;
        Ok(linalg::concat(&[&qd, &pd, &cd]))
    }

    /// `(q⋆, p⋆, c⋆)` with the controller part matched to the disturbance
    /// active at `t`.
    pub fn reference_state(&self, t: f64) -> Result<DVector<f64>> {
        let d = self.schedule.at(t);
        let c = self.design.reference_controller_state(self.sys, self.reference, t, &d)?;
        Ok(linalg::concat(&[&self.reference.q(t)?, &self.reference.p(t)?, &c]))
    }

    /// Reference state at `t0` with no disturbance applied yet.
    pub fn matched_initial_state(&self, t0: f64) -> Result<DVector<f64>> {
        let m = self.sys.inputs();
        let d = if self.schedule.active(t0) { self.schedule.value.clone() } else { DVector::zeros(m) };
        let c = self.design.reference_controller_state(self.sys, self.reference, t0, &d)?;
        Ok(linalg::concat(&[&self.reference.q(t0)?, &self.reference.p(t0)?, &c]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub p: Vec<DVector<f64>>,
    pub c: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub d_active: Vec<bool>,
    /// `‖q − q⋆‖₂`
    pub err_q: Vec<f64>,
    /// `‖(q, p, c) − (q⋆, p⋆, c⋆)‖₂`
    pub err_full: Vec<f64>,
}

impl SimulationTrace {
    fn empty(n: usize, m: usize, k: usize) -> Self {
        SimulationTrace {
            n,
            m,
            k,
            times: Vec::new(),
            q: Vec::new(),
            p: Vec::new(),
            c: Vec::new(),
            u: Vec::new(),
            d_active: Vec::new(),
            err_q: Vec::new(),
            err_full: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stacked `(q, p, c)` at row `i`.
    pub fn state(&self, i: usize) -> DVector<f64> {
        linalg::concat(&[&self.q[i], &self.p[i], &self.c[i]])
    }

    pub fn last_state(&self) -> Option<DVector<f64>> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// Max of `err_q` over rows with `t` in `[from, to]`.
    pub fn max_err_q(&self, from: f64, to: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.err_q)
            .filter(|(t, _)| **t >= from - 1e-12 && **t <= to + 1e-12)
            .map(|(_, e)| *e)
            .reduce(f64::max)
    }
}

/// What lets a run proceed: a passing certificate, or an explicit
/// override.
#[derive(Debug, Clone, Copy)]
pub enum Gate<'a> {
    Certified(&'a ContractionCertificate),
    Unsafe,
}

/// Integrates the closed loop from `x0 = (q, p, c)` over `[t0, t0 + horizon]`.
/// Rows are recorded at every grid time; a zero horizon gives an empty
/// trace.
pub fn simulate(cl: &ClosedLoop<'_>, x0: &DVector<f64>, t0: f64, horizon: f64, dt: f64, gate: Gate<'_>) -> Result<SimulationTrace> {
    if let Gate::Certified(cert) = gate {
        if let crate::cert::Verdict::Fail { reason, .. } = &cert.verdict {
            return Err(Error::Uncertified(reason.clone()));
        }
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Invalid(format!("horizon must be non-negative, got {horizon}")));
    }
    let (n, m) = (cl.sys.dof(), cl.sys.inputs());
    let k = cl.design.controller_dim();
    if x0.len() != cl.state_dim() {
        return Err(Error::dim("initial state", cl.state_dim(), x0.len()));
    }
    let mut trace = SimulationTrace::empty(n, m, k);
    if horizon == 0.0 {
        return Ok(trace);
    }
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    debug!("simulating {} steps of {dt} from t = {t0}", steps);
    let mut x = x0.clone();
    let mut f = |t: f64, y: &DVector<f64>| cl.rhs(t, y);
    for step in 0..=steps {
        let t = t0 + step as f64 * dt;
        if step > 0 {
            x = rk4_step(&mut f, t - dt, &x, dt, step)?;
            if x.norm() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence { time: t, step });
            }
        }
        let (q, p, c) = cl.design.split_state(&x)?;
        let u = cl.design.input(cl.sys, cl.reference, t, &q, &p, &c)?;
        let star = cl.reference_state(t)?;
        trace.err_q.push((&q - star.rows(0, n)).norm());
        trace.err_full.push((&x - &star).norm());
        trace.times.push(t);
        trace.q.push(q);
        trace.p.push(p);
        trace.c.push(c);
        trace.u.push(u);
        trace.d_active.push(cl.schedule.active(t));
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceFit {
    pub rate: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares slope of `ln‖ξ_a(t) − ξ_b(t)‖` over `window`. Identical
/// traces give `rate = −∞`.
pub fn convergence_fit(a: &SimulationTrace, b: &SimulationTrace, window: (f64, f64)) -> Result<ConvergenceFit> {
    if a.len() != b.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12) {
        return Err(Error::Invalid("traces are on different time grids".into()));
    }
    let rows: Vec<(f64, f64)> = (0..a.len())
        .filter(|&i| a.times[i] >= window.0 - 1e-12 && a.times[i] <= window.1 + 1e-12)
        .map(|i| (a.times[i], (a.state(i) - b.state(i)).norm()))
        .collect();
    if rows.len() < 2 {
        return Err(Error::Invalid(format!(
            "convergence window [{}, {}] holds fewer than two samples",
            window.0, window.1
        )));
    }
    if rows.iter().all(|(_, d)| *d == 0.0) {
        return Ok(ConvergenceFit {
            rate: f64::NEG_INFINITY,
            r2: 1.0,
            points: rows.len(),
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|(_, d)| *d > 0.0).map(|(t, d)| (*t, d.ln())).collect();
    Ok(fit_line(&pts))
}

/// Ordinary least squares `y ≈ a + rate·t`.
pub fn fit_line(pts: &[(f64, f64)]) -> ConvergenceFit {
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ym).powi(2)).sum();
    let rate = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    ConvergenceFit {
        rate,
        r2,
        points: pts.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_step() {
        let mut f = |_t: f64, x: &DVector<f64>| Ok(-x);
        let x = rk4_step(&mut f, 0.0, &DVector::from_element(1, 1.0), 0.1, 1).unwrap();
        assert!((x[0] - 0.9048374167).abs() < 1e-7);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn zero_field_is_identity() {
        let mut f = |_t: f64, x: &DVector<f64>| Ok(DVector::zeros(x.len()));
        let x0 = DVector::from_vec(vec![1.5, -2.0]);
        assert_eq!(rk4_step(&mut f, 0.0, &x0, 0.3, 1).unwrap(), x0);
    }

    #[test]
    fn non_finite_derivative_reports_step() {
        let mut f = |_t: f64, _x: &DVector<f64>| Ok(DVector::from_element(1, f64::NAN));
        let err = rk4_step(&mut f, 0.5, &DVector::zeros(1), 0.1, 7).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 7, .. }));
    }

    #[test]
    fn schedule_is_a_step() {
        let s = DisturbanceSchedule::new(0.8, DVector::from_element(1, 20.0), 0.0).unwrap();
        assert!(!s.active(0.799));
        assert!(s.active(800.0 * 1e-3));
        assert_eq!(s.at(1.0)[0], 20.0);
        assert!(DisturbanceSchedule::new(-1.0, DVector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn line_fit_is_exact_for_exponentials() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 3.0 - 2.0 * i as f64 * 0.1)).collect();
        let fit = fit_line(&pts);
        assert!((fit.rate + 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }
}
