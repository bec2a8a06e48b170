//! Port-Hamiltonian systems and the mechanical special case
//! `q̇ = ∇_p H`, `ṗ = −∇_q H + G(u + d)` with `H = ½pᵀM⁻¹(q)p + V(q)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::numdiff;

/// Step used for `∇_q(pᵀM⁻¹(q)p)` when no analytic `∂M/∂q_i` is available.
pub const INERTIA_FD_STEP: f64 = 1e-7;

/// A twice differentiable scalar map with analytic derivatives.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub struct Zero {
    pub dim: usize,
}

impl ScalarField for Zero {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

/// `wᵀx + c`
#[derive(Debug, Clone)]
pub struct Linear {
    pub weights: DVector<f64>,
    pub offset: f64,
}

impl Linear {
    pub fn new(weights: &[f64]) -> Self {
        Linear {
            weights: DVector::from_column_slice(weights),
            offset: 0.0,
        }
    }
}

impl ScalarField for Linear {
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.weights.dot(x) + self.offset
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.weights.clone()
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }
}

/// `c·cos(x_i)`
#[derive(Debug, Clone)]
pub struct Cosine {
    pub coefficient: f64,
    pub index: usize,
    pub dim: usize,
}

impl ScalarField for Cosine {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coefficient * x[self.index].cos()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        g[self.index] = -self.coefficient * x[self.index].sin();
        g
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        h[(self.index, self.index)] = -self.coefficient * x[self.index].cos();
        h
    }
}

/// `½(x−c)ᵀK(x−c)`
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub weight: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl ScalarField for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.center;
        0.5 * e.dot(&(&self.weight * &e))
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let sym = (&self.weight + self.weight.transpose()) * 0.5;
        sym * (x - &self.center)
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        (&self.weight + self.weight.transpose()) * 0.5
    }
}

/// Position-dependent inertia supplied by a scenario.
pub trait InertiaMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// `∂M/∂q_i`, when known in closed form.
    fn partial(&self, _q: &DVector<f64>, _i: usize) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum Inertia {
    Constant {
        matrix: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
    Varying(Arc<dyn InertiaMap>),
}

fn describe(q: &DVector<f64>) -> String {
    format!("q = {:?}", q.as_slice())
}

impl Inertia {
    pub fn constant(matrix: DMatrix<f64>, name: &str) -> Result<Self> {
        linalg::require_spd(&matrix, name)?;
        let inverse = linalg::inverse(&matrix, name)?;
        Ok(Inertia::Constant { matrix, inverse })
    }

    pub fn varying(map: Arc<dyn InertiaMap>) -> Self {
        Inertia::Varying(map)
    }

    pub fn dim(&self) -> usize {
        match self {
            Inertia::Constant { matrix, .. } => matrix.nrows(),
            Inertia::Varying(map) => map.dim(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Inertia::Constant { .. })
    }

    pub fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Inertia::Constant { matrix, .. } => matrix.clone(),
            Inertia::Varying(map) => map.matrix(q),
        }
    }

    pub fn inverse(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            Inertia::Constant { inverse, .. } => Ok(inverse.clone()),
            Inertia::Varying(map) => {
                let m = map.matrix(q);
                linalg::inverse(&m, "inertia matrix").map_err(|_| Error::Singular {
                    what: "inertia matrix".into(),
                    at: describe(q),
                })
            }
        }
    }

    /// `M⁻¹(q)p`
    pub fn velocity(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Inertia::Constant { inverse, .. } => Ok(inverse * p),
            Inertia::Varying(map) => {
                let m = map.matrix(q);
                m.lu().solve(p).ok_or_else(|| Error::Singular {
                    what: "inertia matrix".into(),
                    at: describe(q),
                })
            }
        }
    }

    pub fn kinetic_energy(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * p.dot(&self.velocity(q, p)?))
    }

    /// `∇_q(½pᵀM⁻¹(q)p)`; zero for constant inertia.
    pub fn kinetic_gradient(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let map = match self {
            Inertia::Constant { .. } => return Ok(DVector::zeros(q.len())),
            Inertia::Varying(map) => map,
        };
        let v = self.velocity(q, p)?;
        if map.partial(q, 0).is_some() {
            let mut g = DVector::zeros(q.len());
            for i in 0..q.len() {
                let dm = map.partial(q, i).expect("partial derivative");
                g[i] = -0.5 * v.dot(&(dm * &v));
            }
            return Ok(g);
        }
        let mut failure = None;
        let g = numdiff::gradient(
            |x| match self.kinetic_energy(x, p) {
                Ok(k) => k,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            q,
            INERTIA_FD_STEP,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(g),
        }
    }
}

/// Left annihilator `G⊥` and left pseudo-inverse `G† = (GᵀG)⁻¹Gᵀ` of a
/// full column rank input matrix.
#[derive(Debug, Clone)]
pub struct Annihilator {
    pub perp: DMatrix<f64>,
    pub dagger: DMatrix<f64>,
}

/// Orthonormal rows spanning the left null space of `g`, taken from the
/// unit eigenspace of the projector `I − GG†`. Each row's largest entry
/// is made positive so the result is deterministic.
pub fn annihilator_of(g: &DMatrix<f64>) -> Result<Annihilator> {
    let (n, m) = (g.nrows(), g.ncols());
    if m > n {
        return Err(Error::RankDeficient {
            what: "input matrix G".into(),
            rank: linalg::rank(g),
            expected: m,
        });
    }
    let dagger = linalg::left_pseudo_inverse(g, "input matrix G")?;
    if m == n {
        return Ok(Annihilator {
            perp: DMatrix::zeros(0, n),
            dagger,
        });
    }
    let projector = DMatrix::identity(n, n) - g * &dagger;
    let projector = (&projector + projector.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(projector, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("annihilator projector".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut perp = DMatrix::zeros(n - m, n);
    for (row, &k) in order.iter().take(n - m).enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let lead = v.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v = -v;
        }
        perp.set_row(row, &v.transpose());
    }
    Ok(Annihilator { perp, dagger })
}

/// Input-state-output port-Hamiltonian system `ẋ = (J−R)∇H + g u`.
pub trait PortHamiltonian {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn interconnection(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn dissipation(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn energy(&self, x: &DVector<f64>) -> Result<f64>;
    fn energy_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `F(x) = J(x) − R(x)`
    fn structure_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.interconnection(x) - self.dissipation(x)
    }

    fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.input_dim() {
            return Err(Error::dim("input u", self.input_dim(), u.len()));
        }
        Ok(self.structure_matrix(x) * self.energy_gradient(x)? + self.input_matrix(x) * u)
    }

    /// Passive output `y = gᵀ∇H`.
    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.input_matrix(x).transpose() * self.energy_gradient(x)?)
    }
}

/// Checks skew `J`, symmetric positive semi-definite `R` and full rank `g`
/// at the supplied states.
pub fn check_structure(sys: &dyn PortHamiltonian, samples: &[DVector<f64>]) -> Result<()> {
    for x in samples {
        let j = sys.interconnection(x);
        let r = sys.dissipation(x);
        let scale = linalg::max_abs(&j).max(linalg::max_abs(&r)).max(1.0);
        let dev = linalg::skew_deviation(&j);
        if dev > 1e-12 * scale {
            return Err(Error::Structure {
                what: "J".into(),
                property: "skew-symmetric",
                deviation: dev,
            });
        }
        if !linalg::is_positive_semidefinite(&r, 1e-12 * scale) {
            return Err(Error::Structure {
                what: "R".into(),
                property: "symmetric positive semi-definite",
                deviation: linalg::sym_deviation(&r),
            });
        }
        let g = sys.input_matrix(x);
        let rank = linalg::rank(&g);
        if rank != sys.input_dim() {
            return Err(Error::RankDeficient {
                what: "g".into(),
                rank,
                expected: sys.input_dim(),
            });
        }
    }
    Ok(())
}

type MatrixMap = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type EnergyMap = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// General pH system assembled from closures.
pub struct PhSystem {
    n: usize,
    m: usize,
    j: MatrixMap,
    r: MatrixMap,
    energy: EnergyMap,
    gradient: GradientMap,
    g: MatrixMap,
}

impl fmt::Debug for PhSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhSystem").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl PhSystem {
    pub fn new(
        n: usize,
        m: usize,
        j: MatrixMap,
        r: MatrixMap,
        energy: EnergyMap,
        gradient: GradientMap,
        g: MatrixMap,
    ) -> Self {
        PhSystem { n, m, j, r, energy, gradient, g }
    }

    /// Constant `J`, `R`, `g` and quadratic energy `½xᵀQx`.
    pub fn linear(j: DMatrix<f64>, r: DMatrix<f64>, q: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let n = j.nrows();
        for (name, mat, rows, cols) in [("J", &j, n, n), ("R", &r, n, n), ("Q", &q, n, n)] {
            if mat.nrows() != rows || mat.ncols() != cols {
                return Err(Error::dim(name, rows, mat.nrows().max(mat.ncols())));
            }
        }
        if g.nrows() != n {
            return Err(Error::dim("g rows", n, g.nrows()));
        }
        let m = g.ncols();
        let sys = PhSystem {
            n,
            m,
            j: Box::new(move |_| j.clone()),
            r: Box::new(move |_| r.clone()),
            energy: {
                let q = q.clone();
                Box::new(move |x| 0.5 * x.dot(&(&q * x)))
            },
            gradient: {
                let q = (&q + q.transpose()) * 0.5;
                Box::new(move |x| &q * x)
            },
            g: Box::new(move |_| g.clone()),
        };
        check_structure(&sys, &[DVector::zeros(n)])?;
        Ok(sys)
    }
}

impl PortHamiltonian for PhSystem {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn interconnection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.j)(x)
    }
    fn dissipation(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.r)(x)
    }
    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((self.energy)(x))
    }
    fn energy_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.gradient)(x))
    }
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.g)(x)
    }
}

/// Mechanical plant without natural dissipation and a constant matched
/// disturbance `d`.
#[derive(Debug, Clone)]
pub struct MechanicalPH {
    inertia: Inertia,
    potential: Arc<dyn ScalarField>,
    input: DMatrix<f64>,
    disturbance: DVector<f64>,
    annihilator: Annihilator,
}

impl MechanicalPH {
    pub fn new(inertia: Inertia, potential: Arc<dyn ScalarField>, input: DMatrix<f64>) -> Result<Self> {
        let n = inertia.dim();
        if potential.dim() != n {
            return Err(Error::dim("potential energy", n, potential.dim()));
        }
        if input.nrows() != n {
            return Err(Error::dim("input matrix rows", n, input.nrows()));
        }
        if let Inertia::Varying(map) = &inertia {
            linalg::require_spd(&map.matrix(&DVector::zeros(n)), "inertia matrix")?;
        }
        let annihilator = annihilator_of(&input)?;
        let m = input.ncols();
        Ok(MechanicalPH {
            inertia,
            potential,
            input,
            disturbance: DVector::zeros(m),
            annihilator,
        })
    }

    pub fn with_disturbance(mut self, d: DVector<f64>) -> Result<Self> {
        if d.len() != self.inputs() {
            return Err(Error::dim("disturbance", self.inputs(), d.len()));
        }
        self.disturbance = d;
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        self.inertia.dim()
    }

    pub fn inputs(&self) -> usize {
        self.input.ncols()
    }

    pub fn inertia(&self) -> &Inertia {
        &self.inertia
    }

    pub fn potential(&self) -> &Arc<dyn ScalarField> {
        &self.potential
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.input
    }

    pub fn disturbance(&self) -> &DVector<f64> {
        &self.disturbance
    }

    pub fn annihilator(&self) -> &Annihilator {
        &self.annihilator
    }

    /// Inertia checks at additional configurations.
    pub fn check_inertia_at(&self, samples: &[DVector<f64>]) -> Result<()> {
        for q in samples {
            linalg::require_spd(&self.inertia.matrix(q), "inertia matrix").map_err(|e| match e {
                Error::NotPositiveDefinite(_) => Error::NotPositiveDefinite(format!("inertia matrix at {}", describe(q))),
                other => other,
            })?;
        }
        Ok(())
    }

    fn check_state(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::dim("q", self.dof(), q.len()));
        }
        if p.len() != self.dof() {
            return Err(Error::dim("p", self.dof(), p.len()));
        }
        Ok(())
    }

    pub fn hamiltonian(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        self.check_state(q, p)?;
        Ok(self.inertia.kinetic_energy(q, p)? + self.potential.value(q))
    }

    /// `(∇_q H, ∇_p H)`
    pub fn hamiltonian_grad(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_state(q, p)?;
        let dp = self.inertia.velocity(q, p)?;
        let dq = self.potential.gradient(q) + self.inertia.kinetic_gradient(q, p)?;
        Ok((dq, dp))
    }

    /// `(q̇, ṗ) = (∇_p H, −∇_q H + G(u + d))`
    pub fn open_loop_vector_field(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if u.len() != self.inputs() {
            return Err(Error::dim("input u", self.inputs(), u.len()));
        }
        if d.len() != self.inputs() {
            return Err(Error::dim("disturbance d", self.inputs(), d.len()));
        }
        let (dq, dp) = self.hamiltonian_grad(q, p)?;
        let pdot = -dq + &self.input * (u + d);
        Ok((dp, pdot))
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.dof();
        (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }
}

impl PortHamiltonian for MechanicalPH {
    fn state_dim(&self) -> usize {
        2 * self.dof()
    }
    fn input_dim(&self) -> usize {
        self.inputs()
    }
    fn interconnection(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        linalg::set_block(&mut j, 0, n, &DMatrix::identity(n, n));
        linalg::set_block(&mut j, n, 0, &-DMatrix::<f64>::identity(n, n));
        j
    }
    fn dissipation(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2 * self.dof(), 2 * self.dof())
    }
    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        let (q, p) = self.split(x);
        self.hamiltonian(&q, &p)
    }
    fn energy_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (q, p) = self.split(x);
        let (dq, dp) = self.hamiltonian_grad(&q, &p)?;
        Ok(linalg::concat(&[&dq, &dp]))
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let mut g = DMatrix::zeros(2 * n, self.inputs());
        linalg::set_block(&mut g, n, 0, &self.input);
        g
    }
}
