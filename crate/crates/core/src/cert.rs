//! Contraction certificate for a closed loop `ẋ = P∇H_d(x, t)`:
//! `P` Hurwitz, `αI ≺ ∇²H_d ≺ βI` on a box, and an `ε > 0` for which
//! `N = [[P, cPPᵀ], [−(c + ε)I, −Pᵀ]]`, `c = 1 − α/β`, has no
//! eigenvalues on the imaginary axis.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllers::{Condition, Design};
use crate::error::{Error, Result};
use crate::linalg;

pub const HESSIAN_GUARD: f64 = 1e-3;
pub const DEFAULT_MARGIN_TOL: f64 = 1e-9;
pub const DEFAULT_IM_AXIS_TOL: f64 = 1e-7;
pub const DEFAULT_SAMPLES: usize = 10_000;

/// `{1e-6, 1e-5, …, 1}`
pub fn default_eps_grid() -> Vec<f64> {
    (0..7).map(|k| 10f64.powi(k - 6)).collect()
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Invalid("empty domain box".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::dim("domain upper bound", lower.len(), upper.len()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i]) || !lower[i].is_finite() || !upper[i].is_finite()) {
            return Err(Error::Invalid(format!(
                "domain box coordinate {i} has bounds [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(DomainBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

/// Latin-hypercube sample of `n` points in `domain`.
pub fn latin_hypercube(domain: &DomainBox, n: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let d = domain.dim();
    let mut points = vec![DVector::zeros(d); n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            strata.swap(i, k);
        }
        let (lo, hi) = (domain.lower[j], domain.upper[j]);
        for (i, point) in points.iter_mut().enumerate() {
            let u = (strata[i] as f64 + rng.random::<f64>()) / n as f64;
            point[j] = lo + u * (hi - lo);
        }
    }
    points
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianBounds {
    pub alpha: f64,
    pub beta: f64,
    pub sample_count: usize,
    pub domain: DomainBox,
    /// Smallest gap between a sampled eigenvalue and the bounds.
    pub margin: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Sampled Hessian bounds. Point `k` of a Latin-hypercube sample is paired
/// with `times[k mod times.len()]`.
pub fn estimate_hessian_bounds(
    hessian: impl Fn(&DVector<f64>, f64) -> Result<DMatrix<f64>>,
    domain: &DomainBox,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<HessianBounds> {
    if times.is_empty() || n_samples == 0 {
        return Err(Error::Invalid("Hessian sampling needs at least one point and one time".into()));
    }
    let mut rng = seeded_rng(seed);
    let points = latin_hypercube(domain, n_samples, &mut rng);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut witness = (DVector::zeros(0), 0.0);
    for (k, x) in points.iter().enumerate() {
        let t = times[k % times.len()];
        let h = hessian(x, t)?;
        if h.nrows() != domain.dim() {
            return Err(Error::dim("energy Hessian", domain.dim(), h.nrows()));
        }
        let (a, b) = linalg::sym_eig_range(&h, "energy Hessian")?;
        if a < lo {
            lo = a;
            witness = (x.clone(), t);
        }
        hi = hi.max(b);
    }
    if !(lo > 0.0) {
        return Err(Error::NonConvex {
            min_eig: lo,
            witness: witness.0.iter().copied().collect(),
            t: witness.1,
        });
    }
    let alpha = (1.0 - HESSIAN_GUARD) * lo;
    let beta = (1.0 + HESSIAN_GUARD) * hi;
    Ok(HessianBounds {
        alpha,
        beta,
        sample_count: n_samples,
        domain: domain.clone(),
        margin: (lo - alpha).min(beta - hi),
        min_eig: lo,
        max_eig: hi,
    })
}

/// `(abscissa < −margin_tol, abscissa)`
pub fn hurwitz_check(p: &DMatrix<f64>, margin_tol: f64) -> Result<(bool, f64)> {
    let abscissa = linalg::spectral_abscissa(p, "closed-loop matrix")?;
    Ok((abscissa < -margin_tol, abscissa))
}

/// `[[P, (1 − α/β)PPᵀ], [−(1 − α/β + ε)I, −Pᵀ]]`
pub fn n_matrix(p: &DMatrix<f64>, alpha: f64, beta: f64, eps: f64) -> Result<DMatrix<f64>> {
    if !p.is_square() {
        return Err(Error::dim("P (square)", p.nrows(), p.ncols()));
    }
    if !(alpha > 0.0 && alpha < beta) {
        return Err(Error::Invalid(format!("need 0 < alpha < beta, got alpha = {alpha}, beta = {beta}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("need eps > 0, got {eps}")));
    }
    let k = p.nrows();
    let c = 1.0 - alpha / beta;
    let mut n = DMatrix::zeros(2 * k, 2 * k);
    linalg::set_block(&mut n, 0, 0, p);
    linalg::set_block(&mut n, 0, k, &(p * p.transpose() * c));
    linalg::set_block(&mut n, k, 0, &(DMatrix::identity(k, k) * -(c + eps)));
    linalg::set_block(&mut n, k, k, &-p.transpose());
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub margin_tol: f64,
    pub im_axis_tol: f64,
    pub eps_grid: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            margin_tol: DEFAULT_MARGIN_TOL,
            im_axis_tol: DEFAULT_IM_AXIS_TOL,
            eps_grid: default_eps_grid(),
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail { condition: String, reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Imaginary-axis test of `N` at one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct NTest {
    pub eps: f64,
    /// Smallest `|Re λ|` over the spectrum of `N`.
    pub min_abs_re: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCertificate {
    pub conditions: Vec<Condition>,
    pub hurwitz_ok: bool,
    pub abscissa: f64,
    pub bounds: Option<HessianBounds>,
    pub bounds_failure: Option<String>,
    pub n_tests: Vec<NTest>,
    pub epsilon_found: Option<f64>,
    /// Smallest `|Re λ(N)|` over the whole `ε` grid.
    pub n_spectrum_min_redistance: Option<f64>,
    pub verdict: Verdict,
}

fn n_tests(p: &DMatrix<f64>, bounds: &HessianBounds, options: &CertifyOptions) -> Result<Vec<NTest>> {
    let mut out = Vec::with_capacity(options.eps_grid.len());
    for &eps in &options.eps_grid {
        let n = n_matrix(p, bounds.alpha, bounds.beta, eps)?;
        let spectrum = linalg::eigenvalues(&n, "N matrix")?;
        let passed = spectrum.iter().all(|l| l.re.abs() > options.im_axis_tol * (1.0 + l.norm()));
        let min_abs_re = spectrum.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
        out.push(NTest { eps, min_abs_re, passed });
    }
    Ok(out)
}

fn assemble(
    conditions: Vec<Condition>,
    p: &DMatrix<f64>,
    bounds: std::result::Result<HessianBounds, String>,
    options: &CertifyOptions,
) -> Result<ContractionCertificate> {
    if options.eps_grid.is_empty() || options.eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Invalid("epsilon grid must be non-empty and positive".into()));
    }
    let (hurwitz_ok, abscissa) = hurwitz_check(p, options.margin_tol)?;
    let tests = match &bounds {
        Ok(b) => n_tests(p, b, options)?,
        Err(_) => Vec::new(),
    };
    let epsilon_found = tests.iter().find(|t| t.passed).map(|t| t.eps);
    let n_spectrum_min_redistance = tests.iter().map(|t| t.min_abs_re).reduce(f64::min);
    let verdict = if let Some(c) = conditions.iter().find(|c| !c.ok) {
        Verdict::Fail {
            condition: c.name.clone(),
            reason: format!("{} violated ({})", c.name, c.detail),
        }
    } else if !hurwitz_ok {
        Verdict::Fail {
            condition: "hurwitz".into(),
            reason: format!("not Hurwitz (spectral abscissa {abscissa:.6e})"),
        }
    } else if let Err(msg) = &bounds {
        Verdict::Fail {
            condition: "hessian_bounds".into(),
            reason: msg.clone(),
        }
    } else if epsilon_found.is_none() {
        Verdict::Fail {
            condition: "n_matrix".into(),
            reason: format!(
                "N has eigenvalues on the imaginary axis for every epsilon in the grid (min |Re| {:.3e})",
                n_spectrum_min_redistance.unwrap_or(f64::NAN)
            ),
        }
    } else {
        Verdict::Pass
    };
    let (bounds, bounds_failure) = match bounds {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e)),
    };
    Ok(ContractionCertificate {
        conditions,
        hurwitz_ok,
        abscissa,
        bounds,
        bounds_failure,
        n_tests: tests,
        epsilon_found,
        n_spectrum_min_redistance,
        verdict,
    })
}

/// Hurwitz and `N`-matrix tests for given Hessian bounds.
pub fn certify(p: &DMatrix<f64>, bounds: &HessianBounds, options: &CertifyOptions) -> Result<ContractionCertificate> {
    assemble(Vec::new(), p, Ok(bounds.clone()), options)
}

/// Full certificate for a design: gain sign conditions, `P` Hurwitz,
/// sampled Hessian bounds of the closed-loop energy on `domain`, and the
/// `N`-matrix test.
pub fn certify_design(
    design: &Design,
    domain: &DomainBox,
    times: &[f64],
    options: &CertifyOptions,
) -> Result<ContractionCertificate> {
    let p = design.closed_loop_matrix();
    if domain.dim() != p.nrows() {
        return Err(Error::dim("certification domain", p.nrows(), domain.dim()));
    }
    let bounds = match estimate_hessian_bounds(|x, t| design.energy_hessian(x, t), domain, times, options.n_samples, options.seed) {
        Ok(b) => Ok(b),
        Err(e @ Error::NonConvex { .. }) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    match &bounds {
        Ok(b) => debug!("hessian bounds alpha {:e} beta {:e} over {} samples", b.alpha, b.beta, options.n_samples),
        Err(reason) => debug!("hessian bounds failed: {reason}"),
    }
    assemble(design.conditions(), &p, bounds, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_matrix_example() {
        let p = -DMatrix::<f64>::identity(2, 2);
        let n = n_matrix(&p, 1.0, 2.0, 0.1).unwrap();
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(n.view((0, 0), (2, 2)), -&i);
        assert!((n.view((0, 2), (2, 2)) - &i * 0.5).norm() < 1e-15);
        assert!((n.view((2, 0), (2, 2)) + &i * 0.6).norm() < 1e-15);
        assert_eq!(n.view((2, 2), (2, 2)), i);
    }

    #[test]
    fn n_matrix_rejects_bad_bounds() {
        let p = -DMatrix::<f64>::identity(2, 2);
        assert!(n_matrix(&p, 2.0, 1.0, 0.1).is_err());
        assert!(n_matrix(&p, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn bounds_of_constant_hessian() {
        let domain = DomainBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let b = estimate_hessian_bounds(|_, _| Ok(linalg::diag(&[2.0, 3.0])), &domain, &[0.0], 50, 1).unwrap();
        assert!((b.alpha - 2.0 * (1.0 - HESSIAN_GUARD)).abs() < 1e-12);
        assert!((b.beta - 3.0 * (1.0 + HESSIAN_GUARD)).abs() < 1e-12);
        assert!(b.margin > 0.0);
    }

    #[test]
    fn non_convex_sample_names_witness() {
        let domain = DomainBox::new(vec![-1.0], vec![1.0]).unwrap();
        let err = estimate_hessian_bounds(
            |x, _| Ok(DMatrix::from_element(1, 1, x[0])),
            &domain,
            &[0.0],
            100,
            3,
        )
        .unwrap_err();
        match err {
            Error::NonConvex { min_eig, witness, .. } => {
                assert!(min_eig < 0.0);
                assert_eq!(witness[0], min_eig);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn latin_hypercube_covers_strata() {
        let domain = DomainBox::new(vec![0.0, -2.0], vec![1.0, 2.0]).unwrap();
        let pts = latin_hypercube(&domain, 20, &mut seeded_rng(9));
        for j in 0..2 {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| ((p[j] - domain.lower[j]) / (domain.upper[j] - domain.lower[j]) * 20.0) as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..20).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_eigenvalue_is_not_hurwitz() {
        let p = linalg::diag(&[-1.0, 0.0]);
        let b = HessianBounds {
            alpha: 1.0,
            beta: 2.0,
            sample_count: 1,
            domain: DomainBox::new(vec![0.0], vec![1.0]).unwrap(),
            margin: 0.0,
            min_eig: 1.0,
            max_eig: 2.0,
        };
        let c = certify(&p, &b, &CertifyOptions::default()).unwrap();
        match c.verdict {
            Verdict::Fail { reason, .. } => assert!(reason.starts_with("not Hurwitz")),
            Verdict::Pass => panic!("zero eigenvalue passed"),
        }
    }
}
