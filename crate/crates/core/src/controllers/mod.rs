//! The three tracking controllers and their common interface.

pub mod no_velocity;
pub mod potentials;
pub mod reductions;
pub mod robust;
pub mod robust_no_velocity;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::MechanicalPH;
use crate::reference::ReferenceTrajectory;

pub use no_velocity::DesignNoVelocity;
pub use robust::DesignRobust;
pub use robust_no_velocity::DesignRobustNoVelocity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    NoVelocity,
    Robust,
    RobustNoVelocity,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::NoVelocity => "no_velocity",
            ControllerKind::Robust => "robust",
            ControllerKind::RobustNoVelocity => "robust_no_velocity",
        }
    }

    pub fn is_velocity_free(&self) -> bool {
        !matches!(self, ControllerKind::Robust)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_velocity" => Ok(ControllerKind::NoVelocity),
            "robust" => Ok(ControllerKind::Robust),
            "robust_no_velocity" => Ok(ControllerKind::RobustNoVelocity),
            other => Err(Error::Config(format!(
                "unknown controller `{other}` (expected no_velocity, robust or robust_no_velocity)"
            ))),
        }
    }
}

/// A named sign condition on the design gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl Condition {
    pub fn positive_definite(name: &str, m: &DMatrix<f64>) -> Self {
        let lo = linalg::sym_eig_range(m, name).map(|(lo, _)| lo).unwrap_or(f64::NAN);
        Condition {
            name: name.to_string(),
            ok: linalg::is_positive_definite(m),
            detail: format!("min eigenvalue {lo:.6e}"),
        }
    }

    pub fn positive_semidefinite(name: &str, m: &DMatrix<f64>) -> Self {
        let lo = linalg::sym_eig_range(m, name).map(|(lo, _)| lo).unwrap_or(f64::NAN);
        Condition {
            name: name.to_string(),
            ok: linalg::is_positive_semidefinite(m, 1e-12 * linalg::max_abs(m).max(1.0)),
            detail: format!("min eigenvalue {lo:.6e}"),
        }
    }
}

/// Plant and controller state at a time, for residual checks.
#[derive(Debug, Clone)]
pub struct MatchingSample {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub c: DVector<f64>,
    pub t: f64,
}

/// Max-norm residual of each matching equation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingReport {
    pub entries: Vec<(String, f64)>,
}

impl MatchingReport {
    pub fn new(entries: Vec<(String, f64)>) -> Self {
        MatchingReport { entries }
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries.iter().all(|(_, v)| *v <= tol)
    }
}

pub(crate) fn check_square(name: &str, m: &DMatrix<f64>, size: usize) -> Result<()> {
    if m.nrows() != size || m.ncols() != size {
        return Err(Error::Dimension {
            context: format!("{name} ({size}x{size})"),
            expected: size,
            got: if m.nrows() != size { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

pub(crate) fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let dev = linalg::sym_deviation(m);
    if dev > 1e-12 * linalg::max_abs(m).max(1.0) {
        return Err(Error::Structure {
            what: name.to_string(),
            property: "symmetric",
            deviation: dev,
        });
    }
    Ok(())
}

pub(crate) fn check_rank(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Dimension {
            context: format!("{name} ({rows}x{cols})"),
            expected: rows * cols,
            got: m.nrows() * m.ncols(),
        });
    }
    let r = linalg::rank(m);
    if r < rows.min(cols) {
        return Err(Error::RankDeficient {
            what: name.to_string(),
            rank: r,
            expected: rows.min(cols),
        });
    }
    Ok(())
}

/// One of the three closed-loop designs.
#[derive(Debug, Clone)]
pub enum Design {
    NoVelocity(DesignNoVelocity),
    Robust(DesignRobust),
    RobustNoVelocity(DesignRobustNoVelocity),
}

impl Design {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Design::NoVelocity(_) => ControllerKind::NoVelocity,
            Design::Robust(_) => ControllerKind::Robust,
            Design::RobustNoVelocity(_) => ControllerKind::RobustNoVelocity,
        }
    }

    /// `(n, m)`
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Design::NoVelocity(d) => d.dims(),
            Design::Robust(d) => d.dims(),
            Design::RobustNoVelocity(d) => d.dims(),
        }
    }

    /// Dimension of the controller state.
    pub fn controller_dim(&self) -> usize {
        let m = self.dims().1;
        match self {
            Design::Robust(_) => m,
            _ => 2 * m,
        }
    }

    /// The constant closed-loop structure matrix `P₁`, `P₂` or `P₃`.
    pub fn closed_loop_matrix(&self) -> DMatrix<f64> {
        match self {
            Design::NoVelocity(d) => d.assemble_p1(),
            Design::Robust(d) => d.assemble_p2(),
            Design::RobustNoVelocity(d) => d.assemble_p3(),
        }
    }

    /// Hessian of the closed-loop energy at the stacked state `(q, p, c)`.
    pub fn energy_hessian(&self, state: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let (q, p, c) = self.split_state(state)?;
        match self {
            Design::NoVelocity(d) => d.energy_hessian(&q, &c, t),
            Design::Robust(d) => d.energy_hessian(&q, &p, t),
            Design::RobustNoVelocity(d) => d.energy_hessian(&q, &c, t),
        }
    }

    pub fn split_state(&self, state: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.dims().0;
        let k = self.controller_dim();
        if state.len() != 2 * n + k {
            return Err(Error::dim("closed-loop state", 2 * n + k, state.len()));
        }
        Ok((
            state.rows(0, n).into_owned(),
            state.rows(n, n).into_owned(),
            state.rows(2 * n, k).into_owned(),
        ))
    }

    /// Control input. `p` is only read by the robust design.
    pub fn input(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        t: f64,
        q: &DVector<f64>,
        p: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        match self {
            Design::NoVelocity(d) => d.control(sys, q, c, t),
            Design::Robust(d) => d.control(sys, reference, q, p, c, t),
            Design::RobustNoVelocity(d) => d.control(sys, reference, q, c, t),
        }
    }

    /// Controller state derivative. `p` is only read by the robust design.
    pub fn controller_rate(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Design::NoVelocity(d) => d.extension(q, c, t),
            Design::Robust(d) => d.zeta_dot(q, p, t),
            Design::RobustNoVelocity(d) => d.z_dot(q, c, t),
        }
    }

    /// Controller state matched to the reference under disturbance `d`.
    pub fn reference_controller_state(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        t: f64,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        match self {
            Design::NoVelocity(x) => x.reference_state(reference, t),
            Design::Robust(x) => x.reference_state(sys, d),
            Design::RobustNoVelocity(x) => x.reference_state(sys, reference, t, d),
        }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        match self {
            Design::NoVelocity(d) => d.conditions(),
            Design::Robust(d) => d.conditions(),
            Design::RobustNoVelocity(d) => d.conditions(),
        }
    }

    pub fn validate(&self, sys: &MechanicalPH) -> Result<()> {
        match self {
            Design::NoVelocity(d) => d.validate(sys),
            Design::Robust(d) => d.validate(sys),
            Design::RobustNoVelocity(d) => d.validate(sys),
        }
    }

    pub fn matching(
        &self,
        sys: &MechanicalPH,
        reference: &ReferenceTrajectory,
        samples: &[MatchingSample],
    ) -> Result<MatchingReport> {
        match self {
            Design::NoVelocity(d) => d.matching(sys, samples),
            Design::Robust(d) => d.matching(sys, reference, samples),
            Design::RobustNoVelocity(d) => d.matching(sys, reference, samples),
        }
    }
}
