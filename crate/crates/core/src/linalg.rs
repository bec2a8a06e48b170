//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

const MAX_ITER: usize = 100_000;

pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

pub fn set_block(target: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    target
        .view_mut((row, col), (block.nrows(), block.ncols()))
        .copy_from(block);
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Max-norm of `m + mᵀ`.
pub fn skew_deviation(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m + m.transpose()))
}

/// Max-norm of `m - mᵀ`.
pub fn sym_deviation(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn eigenvalues(m: &DMatrix<f64>, what: &str) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::dim(format!("{what} (square)"), m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen(format!("{what}: non-finite entries")));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Eigen(what.to_string()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    Ok(eigenvalues(m, what)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::dim(format!("{what} (square)"), m.nrows(), m.ncols()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen(format!("{what}: non-finite entries")));
    }
    let s = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Eigen(what.to_string()))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn sym_eig_range(m: &DMatrix<f64>, what: &str) -> Result<(f64, f64)> {
    let values = sym_eigenvalues(m, what)?;
    match (values.first(), values.last()) {
        (Some(lo), Some(hi)) => Ok((*lo, *hi)),
        _ => Err(Error::dim(format!("{what} (non-empty)"), 1, 0)),
    }
}

/// Symmetric to a relative 1e-12 and strictly positive spectrum.
pub fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!("{what} (square)"), m.nrows(), m.ncols()));
    }
    let scale = max_abs(m).max(1.0);
    let dev = sym_deviation(m);
    if dev > 1e-12 * scale {
        return Err(Error::Structure {
            what: what.to_string(),
            property: "symmetric",
            deviation: dev,
        });
    }
    let (lo, _) = sym_eig_range(m, what)?;
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(what.to_string()));
    }
    Ok(())
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.nrows() > 0
        && sym_deviation(m) <= 1e-12 * max_abs(m).max(1.0)
        && sym_eig_range(m, "matrix").map(|(lo, _)| lo > 0.0).unwrap_or(false)
}

pub fn is_positive_semidefinite(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && sym_deviation(m) <= 1e-12 * max_abs(m).max(1.0)
        && (m.nrows() == 0
            || sym_eig_range(m, "matrix")
                .map(|(lo, _)| lo >= -tol)
                .unwrap_or(false))
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with the usual `max(r, c)·eps·σ_max` cutoff.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * top;
    s.iter().filter(|&&x| x > tol).count()
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::dim(format!("{what} (square)"), m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let s = singular_values(m);
    let (hi, lo) = (s[0], s[s.len() - 1]);
    if !(lo > hi * 1e-14) {
        return Err(Error::Singular {
            what: what.to_string(),
            at: format!("condition number {:.3e}", hi / lo),
        });
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        at: "LU pivot".to_string(),
    })
}

/// `(GᵀG)⁻¹Gᵀ` for a full column rank `g`.
pub fn left_pseudo_inverse(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let r = rank(g);
    if r < g.ncols() {
        return Err(Error::RankDeficient {
            what: what.to_string(),
            rank: r,
            expected: g.ncols(),
        });
    }
    let gtg = g.transpose() * g;
    Ok(inverse(&gtg, what)? * g.transpose())
}

/// Moore-Penrose pseudo-inverse through the SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    let top = singular_values(m)[0];
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * top;
    m.clone()
        .svd(true, true)
        .pseudo_inverse(tol)
        .map_err(|e| Error::Invalid(format!("pseudo-inverse: {e}")))
}

pub fn row_vector(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, values.len(), values)
}

pub fn column_vector(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

pub fn concat(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abscissa_of_rotation_is_zero() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(spectral_abscissa(&m, "rot").unwrap().abs() < 1e-14);
    }

    #[test]
    fn spd_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = require_spd(&m, "M_d").unwrap_err();
        assert_eq!(err.to_string(), "M_d not positive definite");
    }

    #[test]
    fn rank_and_pinv() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(rank(&g), 2);
        let gd = left_pseudo_inverse(&g, "G").unwrap();
        assert!(((gd * &g) - DMatrix::identity(2, 2)).norm() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            left_pseudo_inverse(&bad, "G"),
            Err(Error::RankDeficient { rank: 1, .. })
        ));
    }

    #[test]
    fn singular_inverse_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse(&m, "A"), Err(Error::Singular { .. })));
    }
}
