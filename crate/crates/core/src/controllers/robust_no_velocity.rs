//! Robust tracking without velocity measurements: controller state
//! `Z = (z₁, z₂)`, closed-loop energy
//! `H̄_d3 = ½pᵀM_d⁻¹p + V_d3(q, z₁, t) + ½(z₂ − γ₂ + μ₂)ᵀK_z(z₂ − γ₂ + μ₂)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::potentials::{AnchoredPotential, CoupledPotential};
use super::{check_rank, check_square, check_symmetric, Condition, MatchingReport, MatchingSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::MechanicalPH;
use crate::reference::ReferenceTrajectory;
use crate::table::{Table, TimeMap};

pub const Z1_STAR: &str = "z1_star";
pub const ANCHOR: &str = "anchor";

#[derive(Debug, Clone)]
pub struct DesignRobustNoVelocity {
    pub jd12: DMatrix<f64>,
    pub md: DMatrix<f64>,
    pub kz: DMatrix<f64>,
    pub gamma11: DMatrix<f64>,
    pub gamma12: DMatrix<f64>,
    pub gamma21: DMatrix<f64>,
    pub gamma22: DMatrix<f64>,
    pub gamma33: DMatrix<f64>,
    pub vd3: Arc<dyn CoupledPotential>,
    md_inv: DMatrix<f64>,
}

impl DesignRobustNoVelocity {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        jd12: DMatrix<f64>,
        md: DMatrix<f64>,
        kz: DMatrix<f64>,
        gamma11: DMatrix<f64>,
        gamma12: DMatrix<f64>,
        gamma21: DMatrix<f64>,
        gamma22: DMatrix<f64>,
        gamma33: DMatrix<f64>,
        vd3: Arc<dyn CoupledPotential>,
    ) -> Result<Self> {
        let n = jd12.nrows();
        let m = kz.nrows();
        check_square("Jd12", &jd12, n)?;
        check_square("M_d", &md, n)?;
        check_square("K_z", &kz, m)?;
        check_square("Gamma33", &gamma33, m)?;
        check_symmetric("K_z", &kz)?;
        check_symmetric("Gamma33", &gamma33)?;
        for (name, g, rows, cols) in [
            ("Gamma11", &gamma11, n, m),
            ("Gamma12", &gamma12, n, m),
            ("Gamma21", &gamma21, m, n),
            ("Gamma22", &gamma22, m, n),
        ] {
            check_rank(name, g, rows, cols)?;
        }
        if vd3.dims() != (n, m) {
            return Err(Error::dim("V_d3 coordinates", n + m, vd3.dims().0 + vd3.dims().1));
        }
        linalg::require_spd(&md, "M_d")?;
        let md_inv = linalg::inverse(&md, "M_d")?;
        Ok(DesignRobustNoVelocity {
            jd12,
            md,
            kz,
            gamma11,
            gamma12,
            gamma21,
            gamma22,
            gamma33,
            vd3,
            md_inv,
        })
    }

    /// Builds the design with an anchored potential and integrates the
    /// reference controller state `z₁⋆` along `reference`. Returns the
    /// design and the reference with `z1_star` and `anchor` attached.
    #[allow(clippy::too_many_arguments)]
    pub fn with_anchored_potential<P: AnchoredPotential>(
        jd12: DMatrix<f64>,
        md: DMatrix<f64>,
        kz: DMatrix<f64>,
        gamma11: DMatrix<f64>,
        gamma12: DMatrix<f64>,
        gamma21: DMatrix<f64>,
        gamma22: DMatrix<f64>,
        gamma33: DMatrix<f64>,
        template: P,
        reference: &ReferenceTrajectory,
    ) -> Result<(Self, ReferenceTrajectory)> {
        let (potential, z1_star) = solve_reference_states(&template, &gamma21, &gamma22, &gamma33, reference)?;
        let mut reference = reference.clone();
        reference.aux.insert(ANCHOR.into(), potential.anchor().clone());
        reference.aux.insert(Z1_STAR.into(), z1_star);
        let design = DesignRobustNoVelocity::new(
            jd12,
            md,
            kz,
            gamma11,
            gamma12,
            gamma21,
            gamma22,
            gamma33,
            Arc::new(potential),
        )?;
        Ok((design, reference))
    }

    /// `(n, m)`
    pub fn dims(&self) -> (usize, usize) {
        (self.jd12.nrows(), self.kz.nrows())
    }

    /// `ϝ₁ = [Γ₁₁, Γ₁₂]`
    pub fn digamma1(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let mut f = DMatrix::zeros(n, 2 * m);
        linalg::set_block(&mut f, 0, 0, &self.gamma11);
        linalg::set_block(&mut f, 0, m, &self.gamma12);
        f
    }

    /// `ϝ₂ = [Γ₂₁; Γ₂₂]`
    pub fn digamma2(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let mut f = DMatrix::zeros(2 * m, n);
        linalg::set_block(&mut f, 0, 0, &self.gamma21);
        linalg::set_block(&mut f, m, 0, &self.gamma22);
        f
    }

    /// `ϝ₃ = [[−Γ₃₃, 0], [0, 0]]`
    pub fn digamma3(&self) -> DMatrix<f64> {
        let m = self.dims().1;
        let mut f = DMatrix::zeros(2 * m, 2 * m);
        linalg::set_block(&mut f, 0, 0, &-&self.gamma33);
        f
    }

    /// `P₃ = [[0, J, 0], [−Jᵀ, 0, ϝ₁], [ϝ₂, 0, ϝ₃]]`
    pub fn assemble_p3(&self) -> DMatrix<f64> {
        let (n, m) = self.dims();
        let mut p = DMatrix::zeros(2 * n + 2 * m, 2 * n + 2 * m);
        linalg::set_block(&mut p, 0, n, &self.jd12);
        linalg::set_block(&mut p, n, 0, &-self.jd12.transpose());
        linalg::set_block(&mut p, n, 2 * n, &self.digamma1());
        linalg::set_block(&mut p, 2 * n, 0, &self.digamma2());
        linalg::set_block(&mut p, 2 * n, 2 * n, &self.digamma3());
        p
    }

    /// `Φ = ∇_q V_d3(q, z₁, t)`
    pub fn phi(&self, q: &DVector<f64>, z1: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.vd3.grad_q(q, z1, t)
    }

    fn split(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = self.dims().1;
        if z.len() != 2 * m {
            return Err(Error::dim("controller state Z", 2 * m, z.len()));
        }
        Ok((z.rows(0, m).into_owned(), z.rows(m, m).into_owned()))
    }

    fn inverse_gain(&self, sys: &MechanicalPH) -> Result<DMatrix<f64>> {
        let g = sys.input_matrix();
        linalg::inverse(&(g.transpose() * &self.gamma12 * &self.kz), "G^T Gamma12 K_z")
    }

    /// `γ₂ = (GᵀΓ₁₂K_z)⁻¹Gᵀ(−J_d12ᵀΦ⋆ + Γ₁₁∇_{z₁}V_d3⋆ − ṗ⋆)` with `z₁⋆`
    /// read from the reference.
    pub fn gamma2(&self, sys: &MechanicalPH, reference: &ReferenceTrajectory, t: f64) -> Result<DVector<f64>> {
        let q = reference.q(t)?;
        let z1 = reference.aux_at(Z1_STAR, t)?;
        let inner = -self.jd12.transpose() * self.phi(&q, &z1, t)? + &self.gamma11 * self.vd3.grad_w(&q, &z1, t)?
            - reference.p_dot(t)?;
        Ok(self.inverse_gain(sys)? * (sys.input_matrix().transpose() * inner))
    }

    /// `μ₂ = (Γ₁₂K_z)†Gd`
    pub fn mu2(&self, sys: &MechanicalPH, d: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(linalg::pseudo_inverse(&(&self.gamma12 * &self.kz))? * (sys.input_matrix() * d))
    }

    /// Velocity-free control law. Only `∇V(q)` of the plant enters, since
    /// the inertia is constant.
    pub fn control(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        q: &DVector<f64>,
        z: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>> {
        let (z1, z2) = self.split(z)?;
        let gamma2 = self.gamma2(sys, reference, t)?;
        let force = -self.jd12.transpose() * self.phi(q, &z1, t)?
            + &self.gamma11 * self.vd3.grad_w(q, &z1, t)?
            + &self.gamma12 * (&self.kz * (z2 - gamma2))
            + sys.potential().gradient(q);
        Ok(&sys.annihilator().dagger * force)
    }

    /// `(ż₁, ż₂) = (Γ₂₁Φ − Γ₃₃∇_{z₁}V_d3, Γ₂₂Φ)`
    pub fn z_dot(&self, q: &DVector<f64>, z: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let (z1, _) = self.split(z)?;
        let phi = self.phi(q, &z1, t)?;
        let dz1 = &self.gamma21 * &phi - &self.gamma33 * self.vd3.grad_w(q, &z1, t)?;
        let dz2 = &self.gamma22 * phi;
        Ok(linalg::concat(&[&dz1, &dz2]))
    }

    /// Hessian of `H̄_d3` over `(q, p, z₁, z₂)`.
    pub fn energy_hessian(&self, q: &DVector<f64>, z: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let (n, m) = self.dims();
        let (z1, _) = self.split(z)?;
        let hv = self.vd3.hessian(q, &z1, t)?;
        let mut h = DMatrix::zeros(2 * n + 2 * m, 2 * n + 2 * m);
        linalg::set_block(&mut h, 0, 0, &hv.view((0, 0), (n, n)).into_owned());
        linalg::set_block(&mut h, 0, 2 * n, &hv.view((0, n), (n, m)).into_owned());
        linalg::set_block(&mut h, 2 * n, 0, &hv.view((n, 0), (m, n)).into_owned());
        linalg::set_block(&mut h, 2 * n, 2 * n, &hv.view((n, n), (m, m)).into_owned());
        linalg::set_block(&mut h, n, n, &self.md_inv);
        linalg::set_block(&mut h, 2 * n + m, 2 * n + m, &self.kz);
        Ok(h)
    }

    /// Matched controller state on the reference: `(z₁⋆(t), −μ₂)`.
    pub fn reference_state(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        t: f64,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let z1 = reference.aux_at(Z1_STAR, t)?;
        Ok(linalg::concat(&[&z1, &-self.mu2(sys, d)?]))
    }

    pub fn conditions(&self) -> Vec<Condition> {
        vec![
            Condition::positive_definite("Gamma33 positive definite", &self.gamma33),
            Condition::positive_definite("K_z positive definite", &self.kz),
        ]
    }

    pub fn validate(&self, sys: &MechanicalPH) -> Result<()> {
        let (n, m) = self.dims();
        if sys.dof() != n || sys.inputs() != m {
            return Err(Error::dim("plant for robust velocity-free design", n, sys.dof()));
        }
        if !sys.inertia().is_constant() {
            return Err(Error::Invalid("velocity-free tracking needs a constant inertia matrix".into()));
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
        let mut inertia = 0.0_f64;
        let mut potential = 0.0_f64;
        let target = &self.jd12 * &self.md_inv;
        for s in samples {
            let (z1, z2) = self.split(&s.c)?;
            inertia = inertia.max(linalg::max_abs(&(sys.inertia().inverse(&s.q)? - &target)));
            let gamma2 = self.gamma2(sys, reference, s.t)?;
            let r = sys.potential().gradient(&s.q) - self.jd12.transpose() * self.phi(&s.q, &z1, s.t)?
                + &self.gamma11 * self.vd3.grad_w(&s.q, &z1, s.t)?
                + &self.gamma12 * (&self.kz * (z2 - gamma2));
            potential = potential.max(linalg::max_abs_vec(&(perp * r)));
        }
        Ok(MatchingReport::new(vec![
            ("inertia".into(), inertia),
            ("potential".into(), potential),
        ]))
    }
}

/// Integrates `ż₁⋆ = Γ₂₁Φ(q⋆, z₁⋆) − Γ₃₃∇_{z₁}V_d3(q⋆, z₁⋆)` by RK4 on the
/// reference grid, with the anchor recomputed algebraically from
/// `(q⋆, z₁⋆)` at every stage. The start value is a rest point of
/// `∇_{z₁}V_d3(q⋆(t₀), ·)`.
pub fn solve_reference_states<P: AnchoredPotential>(
    template: &P,
    gamma21: &DMatrix<f64>,
    gamma22: &DMatrix<f64>,
    gamma33: &DMatrix<f64>,
    reference: &ReferenceTrajectory,
) -> Result<(P, TimeMap)> {
    let rhs = |t: f64, z1: &DVector<f64>| -> Result<DVector<f64>> {
        let q = reference.q(t)?;
        let anchor = template.anchor_for(&q, z1, gamma22)?;
        Ok(gamma21 * template.grad_q_at(&q, z1, &anchor) - gamma33 * template.grad_w_at(&q, z1))
    };
    let grid = reference.grid();
    let mut z = template.rest_z1(&reference.q(reference.t0)?)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut anchors = Vec::with_capacity(grid.len());
    let h = reference.step;
    for (k, &t) in grid.iter().enumerate() {
        if k > 0 {
            let t_prev = reference.t0 + (k - 1) as f64 * h;
            let z_prev: &DVector<f64> = &rows[k - 1];
            let k1 = rhs(t_prev, z_prev)?;
            let k2 = rhs(t_prev + 0.5 * h, &(z_prev + &k1 * (0.5 * h)))?;
            let k3 = rhs(t_prev + 0.5 * h, &(z_prev + &k2 * (0.5 * h)))?;
            let k4 = rhs(t_prev + h, &(z_prev + &k3 * h))?;
            z = z_prev + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        anchors.push(template.anchor_for(&reference.q(t)?, &z, gamma22)?);
        rows.push(z.clone());
    }
    let anchor = TimeMap::table(Table::from_rows(reference.t0, h, anchors)?);
    let z1_star = TimeMap::table(Table::from_rows(reference.t0, h, rows)?);
    Ok((template.with_anchor(anchor), z1_star))
}
