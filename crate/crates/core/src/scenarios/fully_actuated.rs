//! Fully actuated 2-DoF plant `M = diag(m)`, `V = 0`, `G = I` tracking
//! per-axis sinusoids, under any of the three designs.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{offset_vector, uniform_times, DomainSection, Scenario, SimSection};
use crate::cert::DomainBox;
use crate::controllers::no_velocity::DesignNoVelocity;
use crate::controllers::potentials::FullyActuatedPotential;
use crate::controllers::robust::DesignRobust;
use crate::controllers::robust_no_velocity::DesignRobustNoVelocity;
use crate::controllers::{ControllerKind, Design};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::{Inertia, MechanicalPH, Zero};
use crate::reference::{signal_reference, Sinusoid};
use crate::sim::DisturbanceSchedule;

const DEFAULT_HORIZON: f64 = 10.0;
const DEFAULT_X0_OFFSET: [f64; 2] = [0.1, -0.1];

pub const ID: &str = "fully_actuated_2dof";
const N: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub inertia: Vec<f64>,
}

impl Default for PlantSection {
    fn default() -> Self {
        PlantSection { inertia: vec![1.0, 0.5] }
    }
}

/// Gains of the velocity-free robust design with the coupled quadratic
/// potential; `M_d = M`, `J_d12 = I`. All blocks diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustNoVelocityGains {
    #[serde(rename = "K_q")]
    pub k_q: Vec<f64>,
    #[serde(rename = "K_c")]
    pub k_c: Vec<f64>,
    #[serde(rename = "K_z")]
    pub k_z: Vec<f64>,
    #[serde(rename = "Gamma11")]
    pub gamma11: Vec<f64>,
    #[serde(rename = "Gamma12")]
    pub gamma12: Vec<f64>,
    #[serde(rename = "Gamma21")]
    pub gamma21: Vec<f64>,
    #[serde(rename = "Gamma22")]
    pub gamma22: Vec<f64>,
    #[serde(rename = "Gamma33")]
    pub gamma33: Vec<f64>,
}

impl Default for RobustNoVelocityGains {
    fn default() -> Self {
        RobustNoVelocityGains {
            k_q: vec![15.0; N],
            k_c: vec![0.5; N],
            k_z: vec![45.0; N],
            gamma11: vec![1.5; N],
            gamma12: vec![-0.1; N],
            gamma21: vec![3.0; N],
            gamma22: vec![0.064; N],
            gamma33: vec![7.5; N],
        }
    }
}

/// Gains of the velocity-free extension design; `J_d12 = M⁻¹M_d`.
/// `S1 = [diag(s11), diag(s12)]`, `S2 = [diag(s21); diag(s22)]`,
/// `J_e = [[0, diag(J_e)], [−diag(J_e), 0]]`, `R_e` from three diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoVelocityGains {
    #[serde(rename = "K_q")]
    pub k_q: Vec<f64>,
    #[serde(rename = "K_w")]
    pub k_w: Vec<f64>,
    #[serde(rename = "M_d")]
    pub m_d: Vec<f64>,
    #[serde(rename = "M_e")]
    pub m_e: Vec<f64>,
    pub s11: Vec<f64>,
    pub s12: Vec<f64>,
    pub s21: Vec<f64>,
    pub s22: Vec<f64>,
    #[serde(rename = "J_e")]
    pub j_e: Vec<f64>,
    #[serde(rename = "R_e11")]
    pub r_e11: Vec<f64>,
    #[serde(rename = "R_e12")]
    pub r_e12: Vec<f64>,
    #[serde(rename = "R_e22")]
    pub r_e22: Vec<f64>,
}

impl Default for NoVelocityGains {
    fn default() -> Self {
        NoVelocityGains {
            k_q: vec![10.0; N],
            k_w: vec![10.0; N],
            m_d: vec![0.1; N],
            m_e: vec![0.1; N],
            s11: vec![-4.8; N],
            s12: vec![-0.035; N],
            s21: vec![10.0; N],
            s22: vec![-0.06; N],
            j_e: vec![2.7; N],
            r_e11: vec![4.4; N],
            r_e12: vec![-1.2; N],
            r_e22: vec![0.36; N],
        }
    }
}

/// Gains of the robust design with measured momentum; `J_d12 = M⁻¹M_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustGains {
    #[serde(rename = "K_q")]
    pub k_q: Vec<f64>,
    #[serde(rename = "M_d")]
    pub m_d: Vec<f64>,
    #[serde(rename = "K_zeta")]
    pub k_zeta: Vec<f64>,
    #[serde(rename = "R_d")]
    pub r_d: Vec<f64>,
    #[serde(rename = "W1")]
    pub w1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<f64>,
    #[serde(rename = "W3")]
    pub w3: Vec<f64>,
}

impl Default for RobustGains {
    fn default() -> Self {
        RobustGains {
            k_q: vec![10.0; N],
            m_d: vec![0.1; N],
            k_zeta: vec![10.0; N],
            r_d: vec![6.5; N],
            w1: vec![-10.0; N],
            w2: vec![10.0; N],
            w3: vec![1.5; N],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub controller: String,
    pub robust_no_velocity: RobustNoVelocityGains,
    pub no_velocity: NoVelocityGains,
    pub robust: RobustGains,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            controller: ControllerKind::RobustNoVelocity.as_str().into(),
            robust_no_velocity: RobustNoVelocityGains::default(),
            no_velocity: NoVelocityGains::default(),
            robust: RobustGains::default(),
        }
    }
}

/// `q⋆_i = offset_i + amplitude_i·sin(omega_i·t + phase_i)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub amplitude: Vec<f64>,
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            amplitude: vec![0.5, 0.3],
            omega: vec![1.5, 1.0],
            phase: vec![0.0; N],
            offset: vec![0.0; N],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSection {
    pub d: Vec<f64>,
    pub onset: f64,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        DisturbanceSection {
            d: vec![20.0; N],
            onset: 1.0,
        }
    }
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullyActuatedParams {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    #[serde(default)]
    pub sim: SimSection,
    /// Defaults to a box sized for the chosen controller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSection>,
}

impl Default for FullyActuatedParams {
    fn default() -> Self {
        FullyActuatedParams {
            scenario: ID.into(),
            seed: 0,
            plant: PlantSection::default(),
            design: DesignSection::default(),
            reference: ReferenceSection::default(),
            disturbance: DisturbanceSection::default(),
            sim: SimSection::default(),
            domain: None,
        }
    }
}

impl FullyActuatedParams {
    pub fn with_controller(kind: ControllerKind) -> Self {
        let mut p = FullyActuatedParams::default();
        p.design.controller = kind.as_str().into();
        p
    }
}

fn diag(name: &str, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != N {
        return Err(Error::Config(format!("{name} needs {N} entries, got {}", v.len())));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
}

fn blocks(parts: [[&DMatrix<f64>; 2]; 2]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * N, 2 * N);
    for (i, row) in parts.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            linalg::set_block(&mut out, i * N, j * N, b);
        }
    }
    out
}

fn default_domain(kind: ControllerKind) -> DomainSection {
    let k = if kind == ControllerKind::Robust { N } else { 2 * N };
    let mut lower = vec![-5.0; 2 * N];
    lower.extend(std::iter::repeat_n(-50.0, k));
    DomainSection {
        upper: lower.iter().map(|x| -x).collect(),
        lower,
    }
}

pub(crate) fn assemble(params: &FullyActuatedParams) -> Result<Scenario> {
    let sim = params.sim.resolve(DEFAULT_HORIZON, &DEFAULT_X0_OFFSET)?;
    let kind: ControllerKind = params.design.controller.parse()?;
    let m = diag("plant.inertia", &params.plant.inertia)?;
    let inertia = Inertia::constant(m.clone(), "M")?;
    let system = MechanicalPH::new(inertia, Arc::new(Zero { dim: N }), DMatrix::identity(N, N))?;

    let r = &params.reference;
    for (name, v) in [("amplitude", &r.amplitude), ("omega", &r.omega), ("phase", &r.phase), ("offset", &r.offset)] {
        if v.len() != N {
            return Err(Error::Config(format!("reference.{name} needs {N} entries, got {}", v.len())));
        }
    }
    let signals: Vec<Sinusoid> = (0..N)
        .map(|i| Sinusoid {
            amplitude: r.amplitude[i],
            omega: r.omega[i],
            phase: r.phase[i],
            offset: r.offset[i],
        })
        .collect();
    let t0 = sim.t0;
    // at least four nodes so the tables can interpolate and differentiate
    let tf = t0 + sim.horizon.max(4.0 * sim.dt);
    let base = signal_reference(&system, &signals, t0, tf, sim.dt)?;
    let m_inv = linalg::inverse(&m, "M")?;

    let (design, reference) = match kind {
        ControllerKind::RobustNoVelocity => {
            let g = &params.design.robust_no_velocity;
            let template = FullyActuatedPotential::new(diag("K_q", &g.k_q)?, diag("K_c", &g.k_c)?)?;
            let (d, reference) = DesignRobustNoVelocity::with_anchored_potential(
                DMatrix::identity(N, N),
                m.clone(),
                diag("K_z", &g.k_z)?,
                diag("Gamma11", &g.gamma11)?,
                diag("Gamma12", &g.gamma12)?,
                diag("Gamma21", &g.gamma21)?,
                diag("Gamma22", &g.gamma22)?,
                diag("Gamma33", &g.gamma33)?,
                template,
                &base,
            )?;
            (Design::RobustNoVelocity(d), reference)
        }
        ControllerKind::NoVelocity => {
            let g = &params.design.no_velocity;
            let md = diag("M_d", &g.m_d)?;
            let zero = DMatrix::zeros(N, N);
            let je = diag("J_e", &g.j_e)?;
            let mut s1 = DMatrix::zeros(N, 2 * N);
            linalg::set_block(&mut s1, 0, 0, &diag("s11", &g.s11)?);
            linalg::set_block(&mut s1, 0, N, &diag("s12", &g.s12)?);
            let mut s2 = DMatrix::zeros(2 * N, N);
            linalg::set_block(&mut s2, 0, 0, &diag("s21", &g.s21)?);
            linalg::set_block(&mut s2, N, 0, &diag("s22", &g.s22)?);
            let r12 = diag("R_e12", &g.r_e12)?;
            let (d, reference) = DesignNoVelocity::with_separable_potential(
                &m_inv * &md,
                md,
                diag("M_e", &g.m_e)?,
                s1,
                s2,
                blocks([[&zero, &je], [&-&je, &zero]]),
                blocks([[&diag("R_e11", &g.r_e11)?, &r12], [&r12, &diag("R_e22", &g.r_e22)?]]),
                diag("K_q", &g.k_q)?,
                diag("K_w", &g.k_w)?,
                &base,
            )?;
            (Design::NoVelocity(d), reference)
        }
        ControllerKind::Robust => {
            let g = &params.design.robust;
            let md = diag("M_d", &g.m_d)?;
            let d = DesignRobust::with_quadratic_potential(
                &m_inv * &md,
                md,
                diag("R_d", &g.r_d)?,
                diag("W1", &g.w1)?,
                diag("W2", &g.w2)?,
                diag("W3", &g.w3)?,
                diag("K_zeta", &g.k_zeta)?,
                diag("K_q", &g.k_q)?,
                &base,
            )?;
            (Design::Robust(d), base)
        }
    };

    if params.disturbance.d.len() != N {
        return Err(Error::Config(format!("disturbance.d needs {N} entries")));
    }
    let schedule = DisturbanceSchedule::new(
        params.disturbance.onset,
        DVector::from_column_slice(&params.disturbance.d),
        t0,
    )?;
    let section = params.domain.clone().unwrap_or_else(|| default_domain(kind));
    let domain = DomainBox::new(section.lower, section.upper)?;
    let dim = 2 * N + design.controller_dim();
    if domain.dim() != dim {
        return Err(Error::Config(format!("domain has {} coordinates, state has {dim}", domain.dim())));
    }
    let slowest = r.omega.iter().map(|w| w.abs()).filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
    let period = if slowest.is_finite() { 2.0 * PI / slowest } else { sim.horizon };
    Ok(Scenario {
        id: ID.into(),
        x0_offset: offset_vector(&sim.x0_offset, dim)?,
        system,
        design,
        reference,
        schedule,
        domain,
        t0,
        dt: sim.dt,
        horizon: sim.horizon,
        perturbation: sim.perturbation,
        cert_times: uniform_times(t0, period, tf),
        cert_samples: sim.certificate_samples,
        seed: params.seed,
    })
}

/// Assembles the scenario and enforces the residual gates.
pub fn build_fully_actuated_2dof(params: &FullyActuatedParams) -> Result<Scenario> {
    let scenario = assemble(params)?;
    scenario.gates()?.enforce()?;
    Ok(scenario)
}
