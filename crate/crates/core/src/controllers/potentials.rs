//! Shaped potentials `V_d` used by the three trackers.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::ScalarField;
use crate::table::TimeMap;

/// `V(q, t)`
pub trait TimedPotential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>, t: f64) -> Result<f64>;
    fn gradient(&self, q: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
    fn hessian(&self, q: &DVector<f64>, t: f64) -> Result<DMatrix<f64>>;
}

/// `V(q, w, t)` where `w` is a controller coordinate (`q_e` or `z₁`).
pub trait CoupledPotential: Send + Sync + fmt::Debug {
    /// `(dim q, dim w)`
    fn dims(&self) -> (usize, usize);
    fn value(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<f64>;
    fn grad_q(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
    fn grad_w(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
    /// Hessian over the stacked `(q, w)`.
    fn hessian(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DMatrix<f64>>;
}

/// A coupled potential whose only time dependence is an anchor signal
/// fixed by the reference (`L(t)` or `ℓ₃(t)`).
pub trait AnchoredPotential: CoupledPotential + Clone + 'static {
    fn anchor(&self) -> &TimeMap;
    fn with_anchor(&self, anchor: TimeMap) -> Self;
    /// Anchor value making the reference a solution, given `q⋆`, `z₁⋆`
    /// and the `Γ₂₂` gain.
    fn anchor_for(&self, q_star: &DVector<f64>, z1_star: &DVector<f64>, gamma22: &DMatrix<f64>) -> Result<DVector<f64>>;
    fn grad_q_at(&self, q: &DVector<f64>, z1: &DVector<f64>, anchor: &DVector<f64>) -> DVector<f64>;
    fn grad_w_at(&self, q: &DVector<f64>, z1: &DVector<f64>) -> DVector<f64>;
    /// A `z₁` with `∇_{z₁}V = 0` at the given `q`.
    fn rest_z1(&self, q: &DVector<f64>) -> Result<DVector<f64>>;
}

fn require_dim(context: &str, expected: usize, v: &DVector<f64>) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dim(context, expected, v.len()));
    }
    Ok(())
}

/// `½(q − c(t))ᵀK(q − c(t))`
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub weight: DMatrix<f64>,
    pub center: TimeMap,
}

impl QuadraticPotential {
    pub fn new(weight: DMatrix<f64>, center: TimeMap) -> Result<Self> {
        linalg::require_spd(&weight, "K_q")?;
        if center.dim() != weight.nrows() {
            return Err(Error::dim("potential center", weight.nrows(), center.dim()));
        }
        Ok(QuadraticPotential { weight, center })
    }
}

impl TimedPotential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.weight.nrows()
    }
    fn value(&self, q: &DVector<f64>, t: f64) -> Result<f64> {
        let e = q - self.center.eval(t)?;
        Ok(0.5 * e.dot(&(&self.weight * &e)))
    }
    fn gradient(&self, q: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        require_dim("q", self.dim(), q)?;
        Ok(&self.weight * (q - self.center.eval(t)?))
    }
    fn hessian(&self, _q: &DVector<f64>, _t: f64) -> Result<DMatrix<f64>> {
        Ok(self.weight.clone())
    }
}

/// `½(q − L(t))ᵀK_q(q − L(t)) + ½(w − r(t))ᵀK_w(w − r(t))`
#[derive(Debug, Clone)]
pub struct SeparableQuadratic {
    pub kq: DMatrix<f64>,
    pub kw: DMatrix<f64>,
    pub q_center: TimeMap,
    pub w_center: TimeMap,
}

impl SeparableQuadratic {
    pub fn new(kq: DMatrix<f64>, kw: DMatrix<f64>, q_center: TimeMap, w_center: TimeMap) -> Result<Self> {
        linalg::require_spd(&kq, "K_q")?;
        linalg::require_spd(&kw, "K_w")?;
        if q_center.dim() != kq.nrows() {
            return Err(Error::dim("q center", kq.nrows(), q_center.dim()));
        }
        if w_center.dim() != kw.nrows() {
            return Err(Error::dim("w center", kw.nrows(), w_center.dim()));
        }
        Ok(SeparableQuadratic { kq, kw, q_center, w_center })
    }
}

impl CoupledPotential for SeparableQuadratic {
    fn dims(&self) -> (usize, usize) {
        (self.kq.nrows(), self.kw.nrows())
    }
    fn value(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<f64> {
        let eq = q - self.q_center.eval(t)?;
        let ew = w - self.w_center.eval(t)?;
        Ok(0.5 * eq.dot(&(&self.kq * &eq)) + 0.5 * ew.dot(&(&self.kw * &ew)))
    }
    fn grad_q(&self, q: &DVector<f64>, _w: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        require_dim("q", self.kq.nrows(), q)?;
        Ok(&self.kq * (q - self.q_center.eval(t)?))
    }
    fn grad_w(&self, _q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        require_dim("q_e", self.kw.nrows(), w)?;
        Ok(&self.kw * (w - self.w_center.eval(t)?))
    }
    fn hessian(&self, _q: &DVector<f64>, _w: &DVector<f64>, _t: f64) -> Result<DMatrix<f64>> {
        let (n, m) = self.dims();
        let mut h = DMatrix::zeros(n + m, n + m);
        linalg::set_block(&mut h, 0, 0, &self.kq);
        linalg::set_block(&mut h, n, n, &self.kw);
        Ok(h)
    }
}

/// Fully actuated potential
/// `½(q − L(t))ᵀK_q(q − L(t)) + ½(q − z₁)ᵀK_c(q − z₁)`.
#[derive(Debug, Clone)]
pub struct FullyActuatedPotential {
    pub kq: DMatrix<f64>,
    pub kc: DMatrix<f64>,
    pub anchor: TimeMap,
    kq_inv: DMatrix<f64>,
}

impl FullyActuatedPotential {
    pub fn new(kq: DMatrix<f64>, kc: DMatrix<f64>) -> Result<Self> {
        linalg::require_spd(&kq, "K_q")?;
        linalg::require_spd(&kc, "K_c")?;
        if kc.shape() != kq.shape() {
            return Err(Error::dim("K_c", kq.nrows(), kc.nrows()));
        }
        let kq_inv = linalg::inverse(&kq, "K_q")?;
        let n = kq.nrows();
        Ok(FullyActuatedPotential {
            kq,
            kc,
            anchor: TimeMap::Constant(DVector::zeros(n)),
            kq_inv,
        })
    }
}

impl CoupledPotential for FullyActuatedPotential {
    fn dims(&self) -> (usize, usize) {
        (self.kq.nrows(), self.kq.nrows())
    }
    fn value(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<f64> {
        let el = q - self.anchor.eval(t)?;
        let ec = q - w;
        Ok(0.5 * el.dot(&(&self.kq * &el)) + 0.5 * ec.dot(&(&self.kc * &ec)))
    }
    fn grad_q(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        require_dim("q", self.kq.nrows(), q)?;
        require_dim("z1", self.kq.nrows(), w)?;
        Ok(self.grad_q_at(q, w, &self.anchor.eval(t)?))
    }
    fn grad_w(&self, q: &DVector<f64>, w: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
        require_dim("z1", self.kq.nrows(), w)?;
        Ok(self.grad_w_at(q, w))
    }
    fn hessian(&self, _q: &DVector<f64>, _w: &DVector<f64>, _t: f64) -> Result<DMatrix<f64>> {
        let n = self.kq.nrows();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        linalg::set_block(&mut h, 0, 0, &(&self.kq + &self.kc));
        linalg::set_block(&mut h, 0, n, &-&self.kc);
        linalg::set_block(&mut h, n, 0, &-&self.kc);
        linalg::set_block(&mut h, n, n, &self.kc);
        Ok(h)
    }
}

impl AnchoredPotential for FullyActuatedPotential {
    fn anchor(&self) -> &TimeMap {
        &self.anchor
    }
    fn with_anchor(&self, anchor: TimeMap) -> Self {
        FullyActuatedPotential { anchor, ..self.clone() }
    }
    /// `L = q⋆ + K_q⁻¹K_c(q⋆ − z₁⋆)`
    fn anchor_for(&self, q_star: &DVector<f64>, z1_star: &DVector<f64>, _gamma22: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(q_star + &self.kq_inv * (&self.kc * (q_star - z1_star)))
    }
    fn grad_q_at(&self, q: &DVector<f64>, z1: &DVector<f64>, anchor: &DVector<f64>) -> DVector<f64> {
        &self.kq * (q - anchor) + &self.kc * (q - z1)
    }
    fn grad_w_at(&self, q: &DVector<f64>, z1: &DVector<f64>) -> DVector<f64> {
        -(&self.kc * (q - z1))
    }
    fn rest_z1(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(q.clone())
    }
}

/// Underactuated potential
/// `φ₁(q) + ½k₁(φ₂(q) − ℓ₃(t))² + ½k₂(φ₂(q) − φ₃(z₁))²`.
#[derive(Clone)]
pub struct UnderactuatedPotential {
    pub k1: f64,
    pub k2: f64,
    pub phi1: Arc<dyn ScalarField>,
    pub phi2: Arc<dyn ScalarField>,
    pub phi3: Arc<dyn ScalarField>,
    pub anchor: TimeMap,
}

impl fmt::Debug for UnderactuatedPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnderactuatedPotential")
            .field("k1", &self.k1)
            .field("k2", &self.k2)
            .field("phi1", &self.phi1)
            .field("phi2", &self.phi2)
            .field("phi3", &self.phi3)
            .field("anchor", &self.anchor)
            .finish()
    }
}

impl UnderactuatedPotential {
    pub fn new(
        k1: f64,
        k2: f64,
        phi1: Arc<dyn ScalarField>,
        phi2: Arc<dyn ScalarField>,
        phi3: Arc<dyn ScalarField>,
    ) -> Result<Self> {
        if !(k1 > 0.0) {
            return Err(Error::Invalid(format!("k1 must be positive, got {k1}")));
        }
        if !(k2 > 0.0) {
            return Err(Error::Invalid(format!("k2 must be positive, got {k2}")));
        }
        if phi1.dim() != phi2.dim() {
            return Err(Error::dim("phi2", phi1.dim(), phi2.dim()));
        }
        Ok(UnderactuatedPotential {
            k1,
            k2,
            phi1,
            phi2,
            phi3,
            anchor: TimeMap::Constant(DVector::zeros(1)),
        })
    }

    fn ell(&self, t: f64) -> Result<f64> {
        Ok(self.anchor.eval(t)?[0])
    }
}

impl CoupledPotential for UnderactuatedPotential {
    fn dims(&self) -> (usize, usize) {
        (self.phi1.dim(), self.phi3.dim())
    }
    fn value(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<f64> {
        let (p2, p3) = (self.phi2.value(q), self.phi3.value(w));
        let l = self.ell(t)?;
        Ok(self.phi1.value(q) + 0.5 * self.k1 * (p2 - l).powi(2) + 0.5 * self.k2 * (p2 - p3).powi(2))
    }
    fn grad_q(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        require_dim("q", self.phi1.dim(), q)?;
        require_dim("z1", self.phi3.dim(), w)?;
        Ok(self.grad_q_at(q, w, &self.anchor.eval(t)?))
    }
    fn grad_w(&self, q: &DVector<f64>, w: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
        require_dim("z1", self.phi3.dim(), w)?;
        Ok(self.grad_w_at(q, w))
    }
    fn hessian(&self, q: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let (n, m) = self.dims();
        let (p2, p3) = (self.phi2.value(q), self.phi3.value(w));
        let l = self.ell(t)?;
        let (g2, g3) = (self.phi2.gradient(q), self.phi3.gradient(w));
        let hqq = self.phi1.hessian(q)
            + &g2 * g2.transpose() * (self.k1 + self.k2)
            + self.phi2.hessian(q) * (self.k1 * (p2 - l) + self.k2 * (p2 - p3));
        let hqz = &g2 * g3.transpose() * -self.k2;
        let hzz = &g3 * g3.transpose() * self.k2 - self.phi3.hessian(w) * (self.k2 * (p2 - p3));
        let mut h = DMatrix::zeros(n + m, n + m);
        linalg::set_block(&mut h, 0, 0, &hqq);
        linalg::set_block(&mut h, 0, n, &hqz);
        linalg::set_block(&mut h, n, 0, &hqz.transpose());
        linalg::set_block(&mut h, n, n, &hzz);
        Ok(h)
    }
}

impl AnchoredPotential for UnderactuatedPotential {
    fn anchor(&self) -> &TimeMap {
        &self.anchor
    }
    fn with_anchor(&self, anchor: TimeMap) -> Self {
        UnderactuatedPotential { anchor, ..self.clone() }
    }
    /// Least-squares solution of `Γ₂₂Φ(q⋆, z₁⋆, ℓ₃) = 0`:
    /// `ℓ₃ = ((Γ₂₂∇φ₂)†/k₁)·Γ₂₂(∇φ₁ + k₁φ₂∇φ₂ + k₂(φ₂ − φ₃)∇φ₂)`.
    fn anchor_for(&self, q_star: &DVector<f64>, z1_star: &DVector<f64>, gamma22: &DMatrix<f64>) -> Result<DVector<f64>> {
        let g2 = self.phi2.gradient(q_star);
        let v = gamma22 * &g2;
        let vv = v.norm_squared();
        if !(vv > 0.0) {
            return Err(Error::Singular {
                what: "Gamma22·grad(phi2)".into(),
                at: format!("q = {:?}", q_star.as_slice()),
            });
        }
        let p2 = self.phi2.value(q_star);
        let p3 = self.phi3.value(z1_star);
        let rhs = gamma22 * (self.phi1.gradient(q_star) + &g2 * (self.k1 * p2 + self.k2 * (p2 - p3)));
        Ok(DVector::from_element(1, v.dot(&rhs) / (self.k1 * vv)))
    }
    fn grad_q_at(&self, q: &DVector<f64>, z1: &DVector<f64>, anchor: &DVector<f64>) -> DVector<f64> {
        let p2 = self.phi2.value(q);
        let p3 = self.phi3.value(z1);
        self.phi1.gradient(q) + self.phi2.gradient(q) * (self.k1 * (p2 - anchor[0]) + self.k2 * (p2 - p3))
    }
    fn grad_w_at(&self, q: &DVector<f64>, z1: &DVector<f64>) -> DVector<f64> {
        self.phi3.gradient(z1) * (-self.k2 * (self.phi2.value(q) - self.phi3.value(z1)))
    }
    /// Bisection on `φ₃(z₁) = φ₂(q)` with an expanding bracket (scalar `z₁`).
    fn rest_z1(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        if self.phi3.dim() != 1 {
            return Err(Error::Invalid("rest state search needs a scalar z1".into()));
        }
        let target = self.phi2.value(q);
        let g = |z: f64| self.phi3.value(&DVector::from_element(1, z)) - target;
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        while g(lo).signum() == g(hi).signum() {
            if hi > 1e12 {
                return Err(Error::Invalid(format!("no z1 with phi3(z1) = {target}")));
            }
            lo *= 2.0;
            hi *= 2.0;
        }
        let lo_sign = g(lo).signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid);
            if gm == 0.0 {
                return Ok(DVector::from_element(1, mid));
            }
            if gm.signum() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
        }
        Ok(DVector::from_element(1, 0.5 * (lo + hi)))
    }
}
