//! Ball balanced on an actuated wheel under the robust velocity-free design.
//!
//! `M = [[m1, m2], [m2, m3]]` with
//! `m1 = (2/5 + m_b)(r_w + r_b)²` (kept as printed, although `2/5` is not
//! multiplied by a mass), `m2 = −(2/5)(r_w² + r_w·r_b)`,
//! `m3 = I_w + (2/5)r_w²`, `m4 = m_b·g_r·(r_w + r_b)`, `V = m4·cos q1`,
//! `G = (0, 1)ᵀ`. Total energy shaping with `J_d12 = M⁻¹M_d`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{offset_vector, uniform_times, DomainSection, Scenario, SimSection};
use crate::cert::DomainBox;
use crate::controllers::potentials::UnderactuatedPotential;
use crate::controllers::robust_no_velocity::DesignRobustNoVelocity;
use crate::controllers::{ControllerKind, Design};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ph::{Cosine, Inertia, Linear, MechanicalPH};
use crate::reference::{ball_on_wheel_reference, Sinusoid, WheelConstants};
use crate::sim::DisturbanceSchedule;

const DEFAULT_HORIZON: f64 = 5.0;
const DEFAULT_X0_OFFSET: [f64; 1] = [0.05];

pub const ID: &str = "ball_on_wheel";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelPlant {
    #[serde(rename = "I_w")]
    pub i_w: f64,
    pub m_b: f64,
    pub r_b: f64,
    pub g_r: f64,
    pub r_w: f64,
}

impl Default for WheelPlant {
    fn default() -> Self {
        WheelPlant {
            i_w: 0.00171,
            m_b: 0.042,
            r_b: 0.011,
            g_r: 9.8,
            r_w: 0.075,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelDesign {
    pub controller: String,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k1: f64,
    pub k2: f64,
    #[serde(rename = "K_z")]
    pub k_z: f64,
    #[serde(rename = "Gamma11")]
    pub gamma11: Vec<f64>,
    #[serde(rename = "Gamma12")]
    pub gamma12: Vec<f64>,
    #[serde(rename = "Gamma21")]
    pub gamma21: Vec<f64>,
    #[serde(rename = "Gamma22")]
    pub gamma22: Vec<f64>,
    #[serde(rename = "Gamma33")]
    pub gamma33: f64,
    /// Replaces the derived value when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
}

impl Default for WheelDesign {
    fn default() -> Self {
        WheelDesign {
            controller: ControllerKind::RobustNoVelocity.as_str().into(),
            a1: 4e-3,
            a2: -4.8e-3,
            a3: 0.04,
            k1: 1.8,
            k2: 3.5,
            k_z: 0.1163,
            gamma11: vec![0.0, 5.0],
            gamma12: vec![0.0, 0.6],
            gamma21: vec![5.0, 0.0],
            gamma22: vec![-0.005, 0.0],
            gamma33: 26.8,
            lambda1: None,
            lambda2: None,
        }
    }
}

/// Desired ball angle `a(t) = amplitude·sin(omega·t)` and the two
/// integration constants of the wheel angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelReference {
    pub amplitude: f64,
    pub omega: f64,
    pub b0: f64,
    pub b1: f64,
}

impl Default for WheelReference {
    fn default() -> Self {
        WheelReference {
            amplitude: 2.5,
            omega: 4.0,
            b0: 0.0,
            b1: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelDisturbance {
    pub d: f64,
    pub onset: f64,
}

impl Default for WheelDisturbance {
    fn default() -> Self {
        WheelDisturbance { d: 20.0, onset: 0.8 }
    }
}

fn default_domain() -> DomainSection {
    DomainSection {
        lower: vec![-3.0, -25.0, -1.0, -1.0, -30.0, -5.0],
        upper: vec![3.0, 25.0, 1.0, 1.0, 30.0, 5.0],
    }
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallOnWheelParams {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub plant: WheelPlant,
    #[serde(default)]
    pub design: WheelDesign,
    #[serde(default)]
    pub reference: WheelReference,
    #[serde(default)]
    pub disturbance: WheelDisturbance,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default = "default_domain")]
    pub domain: DomainSection,
}

impl Default for BallOnWheelParams {
    fn default() -> Self {
        BallOnWheelParams {
            scenario: ID.into(),
            seed: 0,
            plant: WheelPlant::default(),
            design: WheelDesign::default(),
            reference: WheelReference::default(),
            disturbance: WheelDisturbance::default(),
            sim: SimSection::default(),
            domain: default_domain(),
        }
    }
}

impl BallOnWheelParams {
    pub fn constants(&self) -> WheelConstants {
        let WheelPlant { i_w, m_b, r_b, g_r, r_w } = self.plant;
        WheelConstants {
            m1: (0.4 + m_b) * (r_w + r_b).powi(2),
            m2: -0.4 * (r_w * r_w + r_w * r_b),
            m3: i_w + 0.4 * r_w * r_w,
            m4: m_b * g_r * (r_w + r_b),
        }
    }

    /// `a1·m3 − a2·m2`
    pub fn denominator(&self) -> f64 {
        let c = self.constants();
        self.design.a1 * c.m3 - self.design.a2 * c.m2
    }

    /// `(λ1, λ2)` solving the matching equation, unless overridden.
    pub fn lambdas(&self) -> Result<(f64, f64)> {
        let c = self.constants();
        let den = self.denominator();
        if den.abs() < 1e-300 {
            return Err(Error::Degenerate("a1·m3 − a2·m2 = 0".into()));
        }
        let l1 = c.m4 * c.det() / den;
        let l2 = (c.m2 * self.design.a1 - c.m1 * self.design.a2) / den;
        Ok((self.design.lambda1.unwrap_or(l1), self.design.lambda2.unwrap_or(l2)))
    }

    pub fn inertia(&self) -> DMatrix<f64> {
        let c = self.constants();
        DMatrix::from_row_slice(2, 2, &[c.m1, c.m2, c.m2, c.m3])
    }

    pub fn desired_inertia(&self) -> DMatrix<f64> {
        let d = &self.design;
        DMatrix::from_row_slice(2, 2, &[d.a1, d.a2, d.a2, d.a3])
    }
}

fn column(name: &str, v: &[f64], rows: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows {
        return Err(Error::Config(format!("{name} needs {rows} entries, got {}", v.len())));
    }
    Ok(DMatrix::from_column_slice(rows, 1, v))
}

pub(crate) fn assemble(params: &BallOnWheelParams) -> Result<Scenario> {
    let sim = params.sim.resolve(DEFAULT_HORIZON, &DEFAULT_X0_OFFSET)?;
    let kind: ControllerKind = params.design.controller.parse()?;
    if kind != ControllerKind::RobustNoVelocity {
        return Err(Error::Config(format!(
            "{ID} supports only the {} controller, got {kind}",
            ControllerKind::RobustNoVelocity
        )));
    }
    let c = params.constants();
    let m = params.inertia();
    linalg::require_spd(&m, "M")?;
    let md = params.desired_inertia();
    linalg::require_spd(&md, "M_d")?;
    let (lambda1, lambda2) = params.lambdas()?;

    let system = MechanicalPH::new(
        Inertia::constant(m.clone(), "M")?,
        Arc::new(Cosine {
            coefficient: c.m4,
            index: 0,
            dim: 2,
        }),
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
    )?;

    let r = &params.reference;
    let t0 = sim.t0;
    // at least four nodes so the tables can interpolate and differentiate
    let tf = t0 + sim.horizon.max(4.0 * sim.dt);
    let signal = Sinusoid::new(r.amplitude, r.omega);
    let base = ball_on_wheel_reference(&c, &signal, r.b0, r.b1, t0, tf, sim.dt)?;

    let d = &params.design;
    let template = UnderactuatedPotential::new(
        d.k1,
        d.k2,
        Arc::new(Cosine {
            coefficient: lambda1,
            index: 0,
            dim: 2,
        }),
        Arc::new(Linear::new(&[lambda2, 1.0])),
        Arc::new(Linear::new(&[1.0])),
    )?;
    let jd12 = linalg::inverse(&m, "M")? * &md;
    let (design, reference) = DesignRobustNoVelocity::with_anchored_potential(
        jd12,
        md,
        DMatrix::from_element(1, 1, d.k_z),
        column("Gamma11", &d.gamma11, 2)?,
        column("Gamma12", &d.gamma12, 2)?,
        column("Gamma21", &d.gamma21, 2)?.transpose(),
        column("Gamma22", &d.gamma22, 2)?.transpose(),
        DMatrix::from_element(1, 1, d.gamma33),
        template,
        &base,
    )?;
    let design = Design::RobustNoVelocity(design);

    let schedule = DisturbanceSchedule::new(
        params.disturbance.onset,
        DVector::from_element(1, params.disturbance.d),
        t0,
    )?;
    let domain = DomainBox::new(params.domain.lower.clone(), params.domain.upper.clone())?;
    let dim = 2 * system.dof() + design.controller_dim();
    if domain.dim() != dim {
        return Err(Error::Config(format!("domain has {} coordinates, state has {dim}", domain.dim())));
    }
    let period = if r.omega != 0.0 { 2.0 * PI / r.omega.abs() } else { sim.horizon };
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
pub fn build_ball_on_wheel(params: &BallOnWheelParams) -> Result<Scenario> {
    let scenario = assemble(params)?;
    scenario.gates()?.enforce()?;
    Ok(scenario)
}
