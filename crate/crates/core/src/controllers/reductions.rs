//! Parameter reductions under which the tracking matching equations
//! collapse to the conventional IDA-PBC potential equation
//! `G⊥(∇V − J_d12ᵀ∇Ṽ_d) = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::MechanicalPH;

fn check_inputs(g: &DMatrix<f64>, k: &DMatrix<f64>, cols: usize, name: &str) -> Result<()> {
    let m = g.ncols();
    if k.nrows() != m || k.ncols() != cols {
        return Err(Error::dim(name, m * cols, k.nrows() * k.ncols()));
    }
    Ok(())
}

/// `S₁ = G[k₁₁, k₁₂]`
pub fn design_reduction_s1(g: &DMatrix<f64>, k11: &DMatrix<f64>, k12: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = g.ncols();
    check_inputs(g, k11, m, "k11")?;
    check_inputs(g, k12, m, "k12")?;
    let mut k = DMatrix::zeros(m, 2 * m);
    linalg::set_block(&mut k, 0, 0, k11);
    linalg::set_block(&mut k, 0, m, k12);
    Ok(g * k)
}

/// `(W₁, R_d) = (GK₂, GK_vGᵀ)`
pub fn design_reduction_w(g: &DMatrix<f64>, k2: &DMatrix<f64>, kv: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = g.ncols();
    check_inputs(g, k2, m, "K2")?;
    check_inputs(g, kv, m, "Kv")?;
    Ok((g * k2, g * kv * g.transpose()))
}

/// `[Γ₁₁, Γ₁₂] = GK_f` with `K_f` of size `m × 2m`.
pub fn design_reduction_f1(g: &DMatrix<f64>, kf: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = g.ncols();
    check_inputs(g, kf, 2 * m, "K_f")?;
    let f1 = g * kf;
    Ok((f1.columns(0, m).into_owned(), f1.columns(m, m).into_owned()))
}

/// `‖G⊥(∇V(q) − J_d12ᵀ∇Ṽ_d(q))‖∞`
pub fn conventional_residual(sys: &MechanicalPH, jd12: &DMatrix<f64>, q: &DVector<f64>, grad_vd: &DVector<f64>) -> f64 {
    let r = sys.potential().gradient(q) - jd12.transpose() * grad_vd;
    linalg::max_abs_vec(&(&sys.annihilator().perp * r))
}
