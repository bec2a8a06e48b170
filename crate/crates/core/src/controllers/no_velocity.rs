//! Tracking without velocity measurements through a dynamic extension
//! `x_e = (q_e, p_e)` and closed-loop energy
//! `H_d1 = ½pᵀM_d⁻¹p + V_d1(q, q_e, t) + ½p_eᵀM_e⁻¹p_e`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::potentials::{CoupledPotential, SeparableQuadratic};
use super::{check_rank, check_square, check_symmetric, Condition, MatchingReport, MatchingSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::MechanicalPH;
use crate::reference::ReferenceTrajectory;
use crate::table::{Table, TimeMap};

pub const QE_STAR: &str = "qe_star";

#[derive(Debug, Clone)]
pub struct DesignNoVelocity {
    pub jd12: DMatrix<f64>,
    pub md: DMatrix<f64>,
    pub me: DMatrix<f64>,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub je: DMatrix<f64>,
    pub re: DMatrix<f64>,
    pub vd1: Arc<dyn CoupledPotential>,
    md_inv: DMatrix<f64>,
    me_inv: DMatrix<f64>,
}

impl DesignNoVelocity {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        jd12: DMatrix<f64>,
        md: DMatrix<f64>,
        me: DMatrix<f64>,
        s1: DMatrix<f64>,
        s2: DMatrix<f64>,
        je: DMatrix<f64>,
        re: DMatrix<f64>,
        vd1: Arc<dyn CoupledPotential>,
    ) -> Result<Self> {
        let n = jd12.nrows();
        let m = me.nrows();
        check_square("Jd12", &jd12, n)?;
        check_square("M_d", &md, n)?;
        check_square("M_e", &me, m)?;
        check_square("J_e", &je, 2 * m)?;
        check_square("R_e", &re, 2 * m)?;
        check_rank("S1", &s1, n, 2 * m)?;
        check_rank("S2", &s2, 2 * m, n)?;
        let dev = linalg::skew_deviation(&je);
        if dev > 1e-12 {
            return Err(Error::Structure {
                what: "J_e".into(),
                property: "skew-symmetric",
                deviation: dev,
            });
        }
        check_symmetric("R_e", &re)?;
        if vd1.dims() != (n, m) {
            return Err(Error::dim("V_d1 coordinates", n + m, vd1.dims().0 + vd1.dims().1));
        }
        linalg::require_spd(&md, "M_d")?;
        linalg::require_spd(&me, "M_e")?;
        let md_inv = linalg::inverse(&md, "M_d")?;
        let me_inv = linalg::inverse(&me, "M_e")?;
        Ok(DesignNoVelocity {
            jd12,
            md,
            me,
            s1,
            s2,
            je,
            re,
            vd1,
            md_inv,
            me_inv,
        })
    }

    /// Builds the design with
    /// `V_d1 = ½(q − L)ᵀK_q(q − L) + ½(q_e − r)ᵀK_w(q_e − r)` anchored so
    /// that the reference, with `p_e⋆ ≡ 0`, solves the closed loop.
    ///
    /// At each time the gradients `g = ∇_qV_d1⋆`, `h = ∇_{q_e}V_d1⋆` solve
    /// `−J_d12ᵀg + s₁₁h = ṗ⋆` and `S₂,bottom·g + F_e,21·h = 0`; then
    /// `q̇_e⋆ = S₂,top·g + F_e,11·h` is integrated by Simpson's rule from
    /// `q_e⋆(t₀) = 0`, and `L = q⋆ − K_q⁻¹g`, `r = q_e⋆ − K_w⁻¹h`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_separable_potential(
        jd12: DMatrix<f64>,
        md: DMatrix<f64>,
        me: DMatrix<f64>,
        s1: DMatrix<f64>,
        s2: DMatrix<f64>,
        je: DMatrix<f64>,
        re: DMatrix<f64>,
        kq: DMatrix<f64>,
        kw: DMatrix<f64>,
        reference: &ReferenceTrajectory,
    ) -> Result<(Self, ReferenceTrajectory)> {
        let n = jd12.nrows();
        let m = me.nrows();
        if s1.shape() != (n, 2 * m) || s2.shape() != (2 * m, n) || je.shape() != (2 * m, 2 * m) || re.shape() != je.shape() {
            return Err(Error::dim("extension gains", 2 * m, s1.ncols()));
        }
        let fe = &je - &re;
        let mut a = DMatrix::zeros(n + m, n + m);
        linalg::set_block(&mut a, 0, 0, &-jd12.transpose());
        linalg::set_block(&mut a, 0, n, &s1.view((0, 0), (n, m)).into_owned());
        linalg::set_block(&mut a, n, 0, &s2.view((m, 0), (m, n)).into_owned());
        linalg::set_block(&mut a, n, n, &fe.view((m, 0), (m, m)).into_owned());
        let a_inv = linalg::inverse(&a, "reference gradient system")?;
        let s2_top = s2.view((0, 0), (m, n)).into_owned();
        let fe11 = fe.view((0, 0), (m, m)).into_owned();
        let gradients = |t: f64| -> Result<(DVector<f64>, DVector<f64>)> {
            let rhs = linalg::concat(&[&reference.p_dot(t)?, &DVector::zeros(m)]);
            let sol = &a_inv * rhs;
            Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
        };
        let rate = |t: f64| -> Result<DVector<f64>> {
            let (g, h) = gradients(t)?;
            Ok(&s2_top * g + &fe11 * h)
        };
        let kq_inv = linalg::inverse(&kq, "K_q")?;
        let kw_inv = linalg::inverse(&kw, "K_w")?;
        let grid = reference.grid();
        let step = reference.step;
        let mut qe = DVector::zeros(m);
        let (mut qe_rows, mut l_rows, mut r_rows) = (Vec::new(), Vec::new(), Vec::new());
        for (k, &t) in grid.iter().enumerate() {
            if k > 0 {
                let t_prev = grid[k - 1];
                qe += (rate(t_prev)? + rate(t_prev + 0.5 * step)? * 4.0 + rate(t)?) * (step / 6.0);
            }
            let (g, h) = gradients(t)?;
            l_rows.push(reference.q(t)? - &kq_inv * g);
            r_rows.push(&qe - &kw_inv * h);
            qe_rows.push(qe.clone());
        }
        let table = |rows| -> Result<TimeMap> { Ok(TimeMap::table(Table::from_rows(reference.t0, step, rows)?)) };
        let vd1 = SeparableQuadratic::new(kq, kw, table(l_rows)?, table(r_rows)?)?;
        let mut reference = reference.clone();
        reference.aux.insert(QE_STAR.into(), table(qe_rows)?);
        let design = DesignNoVelocity::new(jd12, md, me, s1, s2, je, re, Arc::new(vd1))?;
        Ok((design, reference))
    }

    /// `(n, m)`
    pub fn dims(&self) -> (usize, usize) {
        (self.jd12.nrows(), self.me.nrows())
    }

    /// `F_e = J_e − R_e`
    pub fn fe(&self) -> DMatrix<f64> {
        &self.je - &self.re
    }

    /// `P₁ = [[0, J, 0], [−Jᵀ, 0, S₁], [S₂, 0, F_e]]`
    pub fn assemble_p1(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let mut p = DMatrix::zeros(2 * n + 2 * m, 2 * n + 2 * m);
        linalg::set_block(&mut p, 0, n, &self.jd12);
        linalg::set_block(&mut p, n, 0, &-self.jd12.transpose());
        linalg::set_block(&mut p, n, 2 * n, &self.s1);
        linalg::set_block(&mut p, 2 * n, 0, &self.s2);
        linalg::set_block(&mut p, 2 * n, 2 * n, &self.fe());
        p
    }

    fn split(&self, xe: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = self.dims().1;
        if xe.len() != 2 * m {
            return Err(Error::dim("controller state x_e", 2 * m, xe.len()));
        }
        Ok((xe.rows(0, m).into_owned(), xe.rows(m, m).into_owned()))
    }

    /// `∇_{x_e}H_d1 = (∇_{q_e}V_d1, M_e⁻¹p_e)`
    pub fn grad_xe(&self, q: &DVector<f64>, xe: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let (qe, pe) = self.split(xe)?;
        Ok(linalg::concat(&[&self.vd1.grad_w(q, &qe, t)?, &(&self.me_inv * pe)]))
    }

    /// `u = G†(−J_d12ᵀ∇_qV_d1 + S₁∇_{x_e}H_d1 + ∇V(q))`
    pub fn control(&self, sys: &MechanicalPH, q: &DVector<f64>, xe: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let (qe, _) = self.split(xe)?;
        let force = -self.jd12.transpose() * self.vd1.grad_q(q, &qe, t)?
            + &self.s1 * self.grad_xe(q, xe, t)?
            + sys.potential().gradient(q);
        Ok(&sys.annihilator().dagger * force)
    }

    /// `ẋ_e = S₂∇_qV_d1 + F_e∇_{x_e}H_d1`
    pub fn extension(&self, q: &DVector<f64>, xe: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let (qe, _) = self.split(xe)?;
        Ok(&self.s2 * self.vd1.grad_q(q, &qe, t)? + self.fe() * self.grad_xe(q, xe, t)?)
    }

    /// Hessian of `H_d1` over `(q, p, q_e, p_e)`.
    pub fn energy_hessian(&self, q: &DVector<f64>, xe: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let (n, m) = self.dims();
        let (qe, _) = self.split(xe)?;
        let hv = self.vd1.hessian(q, &qe, t)?;
        let mut h = DMatrix::zeros(2 * n + 2 * m, 2 * n + 2 * m);
        linalg::set_block(&mut h, 0, 0, &hv.view((0, 0), (n, n)).into_owned());
        linalg::set_block(&mut h, 0, 2 * n, &hv.view((0, n), (n, m)).into_owned());
        linalg::set_block(&mut h, 2 * n, 0, &hv.view((n, 0), (m, n)).into_owned());
        linalg::set_block(&mut h, 2 * n, 2 * n, &hv.view((n, n), (m, m)).into_owned());
        linalg::set_block(&mut h, n, n, &self.md_inv);
        linalg::set_block(&mut h, 2 * n + m, 2 * n + m, &self.me_inv);
        Ok(h)
    }

    /// `(q_e⋆(t), 0)`, or zero when the reference carries no extension
    /// signal.
    pub fn reference_state(&self, reference: &ReferenceTrajectory, t: f64) -> Result<DVector<f64>> {
        let m = self.dims().1;
        let qe = match reference.aux.get(QE_STAR) {
            Some(map) => map.eval(t)?,
            None => DVector::zeros(m),
        };
        Ok(linalg::concat(&[&qe, &DVector::zeros(m)]))
    }

    pub fn conditions(&self) -> Vec<Condition> {
        vec![Condition::positive_definite("R_e positive definite", &self.re)]
    }

    pub fn validate(&self, sys: &MechanicalPH) -> Result<()> {
        let (n, m) = self.dims();
        if sys.dof() != n || sys.inputs() != m {
            return Err(Error::dim("plant for velocity-free design", n, sys.dof()));
        }
        if !sys.inertia().is_constant() {
            return Err(Error::Invalid("velocity-free tracking needs a constant inertia matrix".into()));
        }
        Ok(())
    }

    pub fn matching(&self, sys: &MechanicalPH, samples: &[MatchingSample]) -> Result<MatchingReport> {
        let perp = &sys.annihilator().perp;
        let m = self.dims().1;
        let s11 = self.s1.columns(0, m).into_owned();
        let s12 = self.s1.columns(m, m).into_owned();
        let target = &self.jd12 * &self.md_inv;
        let (mut inertia, mut potential) = (0.0_f64, 0.0_f64);
        for s in samples {
            let (qe, pe) = self.split(&s.c)?;
            inertia = inertia.max(linalg::max_abs(&(sys.inertia().inverse(&s.q)? - &target)));
            let r = sys.potential().gradient(&s.q) - self.jd12.transpose() * self.vd1.grad_q(&s.q, &qe, s.t)?
                + &s11 * self.vd1.grad_w(&s.q, &qe, s.t)?
                + &s12 * (&self.me_inv * pe);
            potential = potential.max(linalg::max_abs_vec(&(perp * r)));
        }
        Ok(MatchingReport::new(vec![
            ("inertia".into(), inertia),
            ("potential".into(), potential),
        ]))
    }
}
