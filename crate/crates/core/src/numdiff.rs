//! Central finite differences.

use nalgebra::{DMatrix, DVector};

pub fn gradient(mut f: impl FnMut(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = f(&probe);
        probe[i] = xi - h;
        let fm = f(&probe);
        probe[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Column `i` holds the derivative of `f` along `x_i`.
pub fn jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let rows = f(x).len();
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = f(&probe);
        probe[i] = xi - h;
        let fm = f(&probe);
        probe[i] = xi;
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Symmetrized Jacobian of a gradient map.
pub fn hessian_from_gradient(
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let j = jacobian(grad, x, h);
    (&j + j.transpose()) * 0.5
}
