//! Shipped benchmark scenarios and their TOML configuration.

pub mod ball_on_wheel;
pub mod fully_actuated;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cert::{self, CertifyOptions, ContractionCertificate, DomainBox};
use crate::controllers::{Design, MatchingReport, MatchingSample};
use crate::error::{Error, Result};
use crate::ph::MechanicalPH;
use crate::reference::{self, ReferenceTrajectory};
use crate::sim::{self, ClosedLoop, DisturbanceSchedule, Gate, SimulationTrace};

pub use ball_on_wheel::{build_ball_on_wheel, BallOnWheelParams};
pub use fully_actuated::{build_fully_actuated_2dof, FullyActuatedParams};

pub const MATCHING_TOL: f64 = 1e-8;
pub const FEASIBILITY_TOL: f64 = 1e-6;
pub const MOMENTUM_TOL: f64 = 1e-8;
pub const MATCHING_SAMPLES: usize = 1000;
/// Number of certificate sample times over one reference period.
pub const CERT_TIMES: usize = 32;

/// `[sim]` section shared by all scenarios. Unset keys take the
/// scenario's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Added to the matched initial state; missing trailing entries are 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_offset: Option<Vec<f64>>,
    /// Norm of the random offset used for the second run of a pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_samples: Option<usize>,
}

/// `[sim]` with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub t0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub x0_offset: Vec<f64>,
    pub perturbation: f64,
    pub certificate_samples: usize,
}

impl SimSection {
    pub(crate) fn resolve(&self, horizon: f64, x0_offset: &[f64]) -> Result<SimSettings> {
        let s = SimSettings {
            t0: self.t0.unwrap_or(0.0),
            dt: self.dt.unwrap_or(1e-3),
            horizon: self.horizon.unwrap_or(horizon),
            x0_offset: self.x0_offset.clone().unwrap_or_else(|| x0_offset.to_vec()),
            perturbation: self.perturbation.unwrap_or(0.1),
            certificate_samples: self.certificate_samples.unwrap_or(cert::DEFAULT_SAMPLES),
        };
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(Error::Config(format!("sim.dt must be positive, got {}", s.dt)));
        }
        if !(s.horizon >= 0.0) || !s.horizon.is_finite() {
            return Err(Error::Config(format!("sim.horizon must be non-negative, got {}", s.horizon)));
        }
        if !s.t0.is_finite() {
            return Err(Error::Config("sim.t0 must be finite".into()));
        }
        if s.certificate_samples == 0 {
            return Err(Error::Config("sim.certificate_samples must be positive".into()));
        }
        Ok(s)
    }
}

/// `[domain]` box over the closed-loop state `(q, p, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Residual gates checked before anything is simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct GateReport {
    pub matching: MatchingReport,
    pub feasibility: f64,
    pub momentum: f64,
}

impl GateReport {
    pub fn passes(&self) -> bool {
        self.matching.passes(MATCHING_TOL) && self.feasibility <= FEASIBILITY_TOL && self.momentum <= MOMENTUM_TOL
    }

    /// First failing gate as an error.
    pub fn enforce(&self) -> Result<()> {
        for (name, value) in &self.matching.entries {
            if *value > MATCHING_TOL {
                return Err(Error::Gate {
                    gate: format!("matching.{name}"),
                    value: *value,
                    limit: MATCHING_TOL,
                });
            }
        }
        if self.feasibility > FEASIBILITY_TOL {
            return Err(Error::Gate {
                gate: "feasibility".into(),
                value: self.feasibility,
                limit: FEASIBILITY_TOL,
            });
        }
        if self.momentum > MOMENTUM_TOL {
            return Err(Error::Gate {
                gate: "momentum".into(),
                value: self.momentum,
                limit: MOMENTUM_TOL,
            });
        }
        Ok(())
    }
}

/// Plant, design, reference, disturbance and certification box.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub system: MechanicalPH,
    pub design: Design,
    pub reference: ReferenceTrajectory,
    pub schedule: DisturbanceSchedule,
    pub domain: DomainBox,
    pub t0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub x0_offset: DVector<f64>,
    pub perturbation: f64,
    pub cert_times: Vec<f64>,
    pub cert_samples: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn closed_loop(&self) -> Result<ClosedLoop<'_>> {
        ClosedLoop::new(&self.system, &self.design, &self.reference, &self.schedule)
    }

    pub fn closed_loop_with<'a>(&'a self, schedule: &'a DisturbanceSchedule) -> Result<ClosedLoop<'a>> {
        ClosedLoop::new(&self.system, &self.design, &self.reference, schedule)
    }

    pub fn state_dim(&self) -> usize {
        2 * self.system.dof() + self.design.controller_dim()
    }

    /// Reference state with matched controller state, plus the configured
    /// offset.
    pub fn initial_state(&self) -> Result<DVector<f64>> {
        Ok(self.closed_loop()?.matched_initial_state(self.t0)? + &self.x0_offset)
    }

    /// `initial_state()` moved by a random vector of norm `perturbation`.
    pub fn perturbed_initial_state(&self, seed: u64) -> Result<DVector<f64>> {
        let mut rng = cert::seeded_rng(seed);
        let dim = self.state_dim();
        let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        while v.norm() == 0.0 {
            v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        }
        Ok(self.initial_state()? + v.normalize() * self.perturbation)
    }

    /// Latin-hypercube samples of the domain box and of the time horizon.
    pub fn matching_samples(&self, count: usize, seed: u64) -> Result<Vec<MatchingSample>> {
        let n = self.system.dof();
        let k = self.design.controller_dim();
        let mut lower = self.domain.lower.clone();
        let mut upper = self.domain.upper.clone();
        lower.push(self.reference.t0);
        upper.push(self.reference.tf);
        let extended = DomainBox::new(lower, upper)?;
        let points = cert::latin_hypercube(&extended, count, &mut cert::seeded_rng(seed));
        Ok(points
            .into_iter()
            .map(|x| MatchingSample {
                q: x.rows(0, n).into_owned(),
                p: x.rows(n, n).into_owned(),
                c: x.rows(2 * n, k).into_owned(),
                t: x[2 * n + k],
            })
            .collect())
    }

    pub fn matching_report(&self) -> Result<MatchingReport> {
        let samples = self.matching_samples(MATCHING_SAMPLES, self.seed)?;
        self.design.matching(&self.system, &self.reference, &samples)
    }

    pub fn gates(&self) -> Result<GateReport> {
        let grid = self.reference.grid();
        Ok(GateReport {
            matching: self.matching_report()?,
            feasibility: reference::feasibility_residual(&self.system, &self.reference, &grid)?,
            momentum: reference::momentum_residual(&self.system, &self.reference, &grid)?,
        })
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            n_samples: self.cert_samples,
            seed: self.seed,
            ..CertifyOptions::default()
        }
    }

    pub fn certify(&self) -> Result<ContractionCertificate> {
        cert::certify_design(&self.design, &self.domain, &self.cert_times, &self.certify_options())
    }

    pub fn simulate_from(&self, x0: &DVector<f64>, gate: Gate<'_>) -> Result<SimulationTrace> {
        sim::simulate(&self.closed_loop()?, x0, self.t0, self.horizon, self.dt, gate)
    }

    pub fn simulate(&self, gate: Gate<'_>) -> Result<SimulationTrace> {
        self.simulate_from(&self.initial_state()?, gate)
    }
}

pub(crate) fn offset_vector(offset: &[f64], dim: usize) -> Result<DVector<f64>> {
    if offset.len() > dim {
        return Err(Error::Config(format!(
            "sim.x0_offset has {} entries but the closed-loop state has {dim}",
            offset.len()
        )));
    }
    let mut v = DVector::zeros(dim);
    v.rows_mut(0, offset.len()).copy_from_slice(offset);
    Ok(v)
}

pub(crate) fn uniform_times(t0: f64, period: f64, tf: f64) -> Vec<f64> {
    let span = period.min(tf - t0).max(0.0);
    (0..CERT_TIMES).map(|i| t0 + span * i as f64 / CERT_TIMES as f64).collect()
}

/// A parsed configuration file of either shipped scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioConfig {
    BallOnWheel(BallOnWheelParams),
    FullyActuated(FullyActuatedParams),
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let id = table
            .get("scenario")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("missing top-level `scenario` key".into()))?;
        match id {
            ball_on_wheel::ID => Ok(ScenarioConfig::BallOnWheel(
                toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            )),
            fully_actuated::ID => Ok(ScenarioConfig::FullyActuated(
                toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            )),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            ScenarioConfig::BallOnWheel(_) => ball_on_wheel::ID,
            ScenarioConfig::FullyActuated(_) => fully_actuated::ID,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ScenarioConfig::BallOnWheel(p) => p.seed,
            ScenarioConfig::FullyActuated(p) => p.seed,
        }
    }

    pub fn sim_mut(&mut self) -> &mut SimSection {
        match self {
            ScenarioConfig::BallOnWheel(p) => &mut p.sim,
            ScenarioConfig::FullyActuated(p) => &mut p.sim,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ScenarioConfig::BallOnWheel(p) => p.seed = seed,
            ScenarioConfig::FullyActuated(p) => p.seed = seed,
        }
    }

    /// Builds without the residual gates.
    pub fn assemble(&self) -> Result<Scenario> {
        match self {
            ScenarioConfig::BallOnWheel(p) => ball_on_wheel::assemble(p),
            ScenarioConfig::FullyActuated(p) => fully_actuated::assemble(p),
        }
    }

    /// Builds and enforces the matching, feasibility and momentum gates.
    pub fn build(&self) -> Result<Scenario> {
        let scenario = self.assemble()?;
        scenario.gates()?.enforce()?;
        Ok(scenario)
    }
}
