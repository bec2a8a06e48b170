//! Tracking under a constant matched disturbance with integral state `ζ`
//! and closed-loop energy
//! `H̄_d2 = ½pᵀM_d⁻¹(q)p + V_d2(q, t) + ½(ζ − γ₁ + μ₁)ᵀK_ζ(ζ − γ₁ + μ₁)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::potentials::{QuadraticPotential, TimedPotential};
use super::{check_rank, check_square, check_symmetric, Condition, MatchingReport, MatchingSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::{Inertia, MechanicalPH};
use crate::reference::ReferenceTrajectory;
use crate::table::{Table, TimeMap};

/// Step for the second differences of `½pᵀM_d⁻¹(q)p` when `M_d` varies.
const KINETIC_HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct DesignRobust {
    pub jd12: DMatrix<f64>,
    pub md: Inertia,
    pub rd: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
    pub kzeta: DMatrix<f64>,
    pub vd2: Arc<dyn TimedPotential>,
}

impl DesignRobust {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        jd12: DMatrix<f64>,
        md: Inertia,
        rd: DMatrix<f64>,
        w1: DMatrix<f64>,
        w2: DMatrix<f64>,
        w3: DMatrix<f64>,
        kzeta: DMatrix<f64>,
        vd2: Arc<dyn TimedPotential>,
    ) -> Result<Self> {
        let n = jd12.nrows();
        let m = kzeta.nrows();
        check_square("Jd12", &jd12, n)?;
        check_square("R_d", &rd, n)?;
        check_square("K_zeta", &kzeta, m)?;
        check_symmetric("R_d", &rd)?;
        check_symmetric("K_zeta", &kzeta)?;
        if md.dim() != n {
            return Err(Error::dim("M_d", n, md.dim()));
        }
        for (name, w, rows, cols) in [("W1", &w1, n, m), ("W2", &w2, m, n), ("W3", &w3, m, n)] {
            check_rank(name, w, rows, cols)?;
        }
        if vd2.dim() != n {
            return Err(Error::dim("V_d2", n, vd2.dim()));
        }
        Ok(DesignRobust {
            jd12,
            md,
            rd,
            w1,
            w2,
            w3,
            kzeta,
            vd2,
        })
    }

    /// Constant `M_d` with `V_d2 = ½(q − L(t))ᵀK_q(q − L(t))`, where
    /// `L = q⋆ + K_q⁻¹W₂⁺W₃M_d⁻¹p⋆` makes `W₂Θ⋆ + W₃M_d⁻¹p⋆ = 0` along the
    /// reference (`W₂⁺` a right inverse).
    #[allow(clippy::too_many_arguments)]
    pub fn with_quadratic_potential(
        jd12: DMatrix<f64>,
        md: DMatrix<f64>,
        rd: DMatrix<f64>,
        w1: DMatrix<f64>,
        w2: DMatrix<f64>,
        w3: DMatrix<f64>,
        kzeta: DMatrix<f64>,
        kq: DMatrix<f64>,
        reference: &ReferenceTrajectory,
    ) -> Result<Self> {
        let inertia = Inertia::constant(md, "M_d")?;
        let md_inv = inertia.inverse(&DVector::zeros(jd12.nrows()))?;
        let right = linalg::pseudo_inverse(&w2)?;
        let kq_inv = linalg::inverse(&kq, "K_q")?;
        let shift = kq_inv * right * &w3 * md_inv;
        let center = Table::try_tabulate(
            |t| Ok(reference.q(t)? + &shift * reference.p(t)?),
            reference.t0,
            reference.tf,
            reference.step,
        )?;
        let vd2 = QuadraticPotential::new(kq, TimeMap::table(center))?;
        DesignRobust::new(jd12, inertia, rd, w1, w2, w3, kzeta, Arc::new(vd2))
    }

    /// `(n, m)`
    pub fn dims(&self) -> (usize, usize) {
        (self.jd12.nrows(), self.kzeta.nrows())
    }

    /// `P₂ = [[0, J, 0], [−Jᵀ, −R_d, W₁], [W₂, W₃, 0]]`
    pub fn assemble_p2(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let mut p = DMatrix::zeros(2 * n + m, 2 * n + m);
        linalg::set_block(&mut p, 0, n, &self.jd12);
        linalg::set_block(&mut p, n, 0, &-self.jd12.transpose());
        linalg::set_block(&mut p, n, n, &-&self.rd);
        linalg::set_block(&mut p, n, 2 * n, &self.w1);
        linalg::set_block(&mut p, 2 * n, 0, &self.w2);
        linalg::set_block(&mut p, 2 * n, n, &self.w3);
        p
    }

    /// `Θ = ½∇_q(pᵀM_d⁻¹(q)p) + ∇_q V_d2(q, t)`
    pub fn theta(&self, q: &DVector<f64>, p: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        Ok(self.md.kinetic_gradient(q, p)? + self.vd2.gradient(q, t)?)
    }

    fn inverse_gain(&self, sys: &MechanicalPH) -> Result<DMatrix<f64>> {
        let g = sys.input_matrix();
        linalg::inverse(&(g.transpose() * &self.w1 * &self.kzeta), "G^T W1 K_zeta")
    }

    /// `γ₁ = (GᵀW₁K_ζ)⁻¹(Gᵀ(−J_d12ᵀΘ⋆ − R_dM_d⁻¹(q⋆)p⋆) − Gᵀṗ⋆)`
    pub fn gamma1(&self, sys: &MechanicalPH, reference: &ReferenceTrajectory, t: f64) -> Result<DVector<f64>> {
        let q = reference.q(t)?;
        let p = reference.p(t)?;
        let gt = sys.input_matrix().transpose();
        let inner = -self.jd12.transpose() * self.theta(&q, &p, t)? - &self.rd * self.md.velocity(&q, &p)?;
        Ok(self.inverse_gain(sys)? * (&gt * inner - &gt * reference.p_dot(t)?))
    }

    /// `μ₁ = (W₁K_ζ)†Gd`
    pub fn mu1(&self, sys: &MechanicalPH, d: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(linalg::pseudo_inverse(&(&self.w1 * &self.kzeta))? * (sys.input_matrix() * d))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn control(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        q: &DVector<f64>,
        p: &DVector<f64>,
        zeta: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>> {
        let m = self.dims().1;
        if zeta.len() != m {
            return Err(Error::dim("controller state zeta", m, zeta.len()));
        }
        let gamma1 = self.gamma1(sys, reference, t)?;
        let (dhdq, _) = sys.hamiltonian_grad(q, p)?;
        let force = -self.jd12.transpose() * self.theta(q, p, t)? - &self.rd * self.md.velocity(q, p)?
            + &self.w1 * (&self.kzeta * (zeta - gamma1))
            + dhdq;
        Ok(&sys.annihilator().dagger * force)
    }

    /// `ζ̇ = W₂Θ + W₃M_d⁻¹(q)p`
    pub fn zeta_dot(&self, q: &DVector<f64>, p: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        Ok(&self.w2 * self.theta(q, p, t)? + &self.w3 * self.md.velocity(q, p)?)
    }

    /// Hessian of `H̄_d2` over `(q, p, ζ)`.
    pub fn energy_hessian(&self, q: &DVector<f64>, p: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let (n, m) = self.dims();
        let mut h = DMatrix::zeros(2 * n + m, 2 * n + m);
        let kinetic = if self.md.is_constant() {
            let mut k = DMatrix::zeros(2 * n, 2 * n);
            linalg::set_block(&mut k, n, n, &self.md.inverse(q)?);
            k
        } else {
            self.kinetic_hessian(q, p)?
        };
        linalg::set_block(&mut h, 0, 0, &kinetic);
        let vqq = h.view((0, 0), (n, n)).into_owned() + self.vd2.hessian(q, t)?;
        linalg::set_block(&mut h, 0, 0, &vqq);
        linalg::set_block(&mut h, 2 * n, 2 * n, &self.kzeta);
        Ok(h)
    }

    /// Second differences of `½pᵀM_d⁻¹(q)p` over `(q, p)`.
    fn kinetic_hessian(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = q.len();
        let x = linalg::concat(&[q, p]);
        let f = |y: &DVector<f64>| -> Result<f64> {
            self.md.kinetic_energy(&y.rows(0, n).into_owned(), &y.rows(n, n).into_owned())
        };
        let h = KINETIC_HESSIAN_STEP;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        let f0 = f(&x)?;
        for i in 0..2 * n {
            for j in i..2 * n {
                let shifted = |si: f64, sj: f64| -> Result<f64> {
                    let mut y = x.clone();
                    y[i] += si;
                    y[j] += sj;
                    f(&y)
                };
                let v = if i == j {
                    (shifted(h, 0.0)? - 2.0 * f0 + shifted(-h, 0.0)?) / (h * h)
                } else {
                    (shifted(h, h)? - shifted(h, -h)? - shifted(-h, h)? + shifted(-h, -h)?) / (4.0 * h * h)
                };
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Matched controller state on the reference: `ζ⋆ = −μ₁`.
    pub fn reference_state(&self, sys: &MechanicalPH, d: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-self.mu1(sys, d)?)
    }

    pub fn conditions(&self) -> Vec<Condition> {
        vec![
            Condition::positive_definite("K_zeta positive definite", &self.kzeta),
            Condition::positive_semidefinite("R_d positive semi-definite", &self.rd),
        ]
    }

    pub fn validate(&self, sys: &MechanicalPH) -> Result<()> {
        let (n, m) = self.dims();
        if sys.dof() != n || sys.inputs() != m {
            return Err(Error::dim("plant for robust design", n, sys.dof()));
        }
        self.inverse_gain(sys).map(|_| ())
    }

    pub fn matching(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        samples: &[MatchingSample],
    ) -> Result<MatchingReport> {
        let perp = &sys.annihilator().perp;
        let (mut inertia, mut kinetic, mut potential) = (0.0_f64, 0.0_f64, 0.0_f64);
        for s in samples {
            let target = &self.jd12 * self.md.inverse(&s.q)?;
            inertia = inertia.max(linalg::max_abs(&(sys.inertia().inverse(&s.q)? - target)));
            let k = sys.inertia().kinetic_gradient(&s.q, &s.p)? * 2.0
                - self.jd12.transpose() * self.md.kinetic_gradient(&s.q, &s.p)? * 2.0
                - &self.rd * self.md.velocity(&s.q, &s.p)? * 2.0;
            kinetic = kinetic.max(linalg::max_abs_vec(&(perp * k)));
            let gamma1 = self.gamma1(sys, reference, s.t)?;
            let r = sys.potential().gradient(&s.q) - self.jd12.transpose() * self.vd2.gradient(&s.q, s.t)?
                + &self.w1 * (&self.kzeta * (&s.c - gamma1));
            potential = potential.max(linalg::max_abs_vec(&(perp * r)));
        }
        Ok(MatchingReport::new(vec![
            ("inertia".into(), inertia),
            ("kinetic".into(), kinetic),
            ("potential".into(), potential),
        ]))
    }
}
