use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use phtrack_core::cert::{ContractionCertificate, Verdict};
use phtrack_core::io::{self, Report};
use phtrack_core::scenarios::{GateReport, Scenario, ScenarioConfig, FEASIBILITY_TOL};
use phtrack_core::sim::{self, Gate, SimulationTrace};
use phtrack_core::Error;

use crate::manifest::RunManifest;
use crate::{Cli, Command};

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Done,
    /// The design or reference failed a check (exit code 2).
    Rejected(String),
}

/// Errors that reject the design rather than the input or the run.
fn rejects_design(e: &Error) -> bool {
    matches!(
        e,
        Error::Gate { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Singular { .. }
            | Error::RankDeficient { .. }
            | Error::Structure { .. }
            | Error::Degenerate(_)
            | Error::Uncertified(_)
            | Error::NonConvex { .. }
    )
}

fn core<T>(r: phtrack_core::Result<T>) -> Result<std::result::Result<T, Status>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) if rejects_design(&e) => Ok(Err(Status::Rejected(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

macro_rules! checked {
    ($e:expr) => {
        match core($e)? {
            Ok(v) => v,
            Err(status) => return Ok(status),
        }
    };
}

struct Loaded {
    config: ScenarioConfig,
    manifest: RunManifest,
}

fn load(cli: &Cli, command: &str) -> Result<Loaded> {
    let bytes = std::fs::read(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    let mut manifest = RunManifest::new(command, &cli.config, &bytes);
    info!("config {} sha256 {}", cli.config.display(), manifest.config_hash);
    let text = String::from_utf8(bytes).context("config is not UTF-8")?;
    let mut config = ScenarioConfig::from_toml_str(&text)?;
    if let Some(dt) = cli.dt {
        config.sim_mut().dt = Some(dt);
    }
    if let Some(h) = cli.horizon {
        config.sim_mut().horizon = Some(h);
    }
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    manifest.scenario = config.id().into();
    manifest.seed = config.seed();
    Ok(Loaded { config, manifest })
}

pub fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Certify => certify(cli),
        Command::Simulate { compare_out } => simulate(cli, compare_out.as_deref()),
        Command::Reference => reference(cli),
        Command::MatchCheck => match_check(cli),
    }
}

fn emit(report: &Report, out: Option<&Path>) -> Result<()> {
    let text = report.render();
    if let Some(path) = out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{text}");
    Ok(())
}

fn gate_report(g: &GateReport) -> Report {
    let mut r = Report::new();
    for (name, value) in &g.matching.entries {
        r.put(format!("matching.{name}"), *value);
    }
    r.put("feasibility", g.feasibility).put("momentum", g.momentum).put("passed", g.passes());
    r
}

fn certificate_report(c: &ContractionCertificate) -> Report {
    let mut r = Report::new();
    match &c.verdict {
        Verdict::Pass => {
            r.put("verdict", "pass");
        }
        Verdict::Fail { condition, reason } => {
            r.put("verdict", "fail").put("condition", condition.as_str()).put("reason", reason.as_str());
        }
    }
    for cond in &c.conditions {
        r.put(format!("conditions.{}", cond.name.replace(' ', "_")), cond.ok);
    }
    r.put("hurwitz", c.hurwitz_ok).put("spectral_abscissa", c.abscissa);
    if let Some(b) = &c.bounds {
        r.put("hessian.alpha", b.alpha)
            .put("hessian.beta", b.beta)
            .put("hessian.min_eig", b.min_eig)
            .put("hessian.max_eig", b.max_eig)
            .put("hessian.margin", b.margin)
            .put("hessian.samples", b.sample_count);
    }
    if let Some(f) = &c.bounds_failure {
        r.put("hessian.failure", f.as_str());
    }
    for t in &c.n_tests {
        r.put(format!("n_test.{}", io::number(t.eps)), t.min_abs_re);
    }
    if let Some(eps) = c.epsilon_found {
        r.put("epsilon", eps);
    }
    r
}

fn verdict_reason(c: &ContractionCertificate) -> Option<String> {
    match &c.verdict {
        Verdict::Pass => None,
        Verdict::Fail { condition, reason } => Some(format!("{condition}: {reason}")),
    }
}

fn certify(cli: &Cli) -> Result<Status> {
    let Loaded { config, mut manifest } = load(cli, "certify")?;
    let scenario = checked!(config.assemble());
    let gates = checked!(scenario.gates());
    let cert = checked!(scenario.certify());
    if let Some(out) = &cli.out {
        manifest.outputs.push(out.clone());
    }
    let mut report = Report::new();
    report.extend("manifest", &manifest.report());
    report.extend("certificate", &certificate_report(&cert));
    report.extend("residual", &gate_report(&gates));
    emit(&report, cli.out.as_deref())?;
    if let Err(e) = gates.enforce() {
        return Ok(Status::Rejected(e.to_string()));
    }
    Ok(match verdict_reason(&cert) {
        Some(reason) => Status::Rejected(reason),
        None => Status::Done,
    })
}

fn write_csv(path: &Path, manifest: &RunManifest, write: impl FnOnce(&mut BufWriter<File>) -> phtrack_core::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush()?;
    manifest.write_sidecar(path).with_context(|| format!("writing manifest for {}", path.display()))?;
    Ok(())
}

fn trace_summary(s: &Scenario, trace: &SimulationTrace) -> Result<Report> {
    let mut r = Report::new();
    r.put("samples", trace.len());
    if let Some(last) = trace.len().checked_sub(1) {
        let t = trace.times[last];
        let q_star = s.reference.q(t)?;
        r.put("final_time", t)
            .put("final_err_q", trace.err_q[last])
            .put("final_err_full", trace.err_full[last])
            .put("final_q1_error", (trace.q[last][0] - q_star[0]).abs());
        if let Some(e) = trace.max_err_q(t - 1.0, t) {
            r.put("max_err_q_final_second", e);
        }
    }
    r.put("disturbance_onset", s.schedule.onset);
    Ok(r)
}

fn simulate(cli: &Cli, compare_out: Option<&Path>) -> Result<Status> {
    let Loaded { config, mut manifest } = load(cli, "simulate")?;
    let scenario = checked!(config.build());
    let cert = checked!(scenario.certify());
    if !cert.verdict.passed() && !cli.unsafe_run {
        let reason = verdict_reason(&cert).unwrap_or_default();
        return Ok(Status::Rejected(format!("design not certified ({reason}); pass --unsafe to run anyway")));
    }
    let gate = if cli.unsafe_run { Gate::Unsafe } else { Gate::Certified(&cert) };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    manifest.outputs.push(out.clone());
    if let Some(p) = compare_out {
        manifest.outputs.push(p.to_path_buf());
    }
    let x0 = scenario.initial_state()?;
    let trace = checked!(scenario.simulate_from(&x0, gate));
    write_csv(&out, &manifest, |w| io::write_trace_csv(&trace, w))?;

    let mut report = Report::new();
    report.extend("manifest", &manifest.report());
    report.put("certificate.verdict", if cert.verdict.passed() { "pass" } else { "fail" });
    report.extend("summary", &trace_summary(&scenario, &trace)?);
    if let Some(path) = compare_out {
        let x1 = scenario.perturbed_initial_state(manifest.seed.wrapping_add(1))?;
        let gate = if cli.unsafe_run { Gate::Unsafe } else { Gate::Certified(&cert) };
        let other = checked!(scenario.simulate_from(&x1, gate));
        write_csv(path, &manifest, |w| io::write_trace_csv(&other, w))?;
        report.put("compare.initial_distance", (&x1 - &x0).norm());
        let window = (scenario.t0 + 0.5, scenario.t0 + scenario.horizon);
        match sim::convergence_fit(&trace, &other, window) {
            Ok(fit) => {
                report.put("compare.rate", fit.rate).put("compare.r2", fit.r2).put("compare.points", fit.points);
            }
            Err(e) => {
                report.put("compare.fit", e.to_string());
            }
        }
    }
    emit(&report, None)?;
    Ok(Status::Done)
}

fn reference(cli: &Cli) -> Result<Status> {
    let Loaded { config, mut manifest } = load(cli, "reference")?;
    let scenario = checked!(config.assemble());
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("reference.csv"));
    manifest.outputs.push(out.clone());
    let grid = scenario.reference.grid();
    let feasibility = phtrack_core::reference::feasibility_residual(&scenario.system, &scenario.reference, &grid)?;
    write_csv(&out, &manifest, |w| io::write_reference_csv(&scenario.reference, &grid, w))?;
    let mut report = Report::new();
    report.extend("manifest", &manifest.report());
    report.put("reference.nodes", grid.len()).put("reference.feasibility", feasibility);
    emit(&report, None)?;
    if feasibility > FEASIBILITY_TOL {
        return Ok(Status::Rejected(format!(
            "reference feasibility residual {feasibility:.3e} exceeds {FEASIBILITY_TOL:.1e}"
        )));
    }
    Ok(Status::Done)
}

fn match_check(cli: &Cli) -> Result<Status> {
    let Loaded { config, mut manifest } = load(cli, "match-check")?;
    let scenario = checked!(config.assemble());
    let gates = checked!(scenario.gates());
    if let Some(out) = &cli.out {
        manifest.outputs.push(out.clone());
    }
    let mut report = Report::new();
    report.extend("manifest", &manifest.report());
    report.extend("residual", &gate_report(&gates));
    emit(&report, cli.out.as_deref())?;
    Ok(match gates.enforce() {
        Ok(()) => Status::Done,
        Err(e) => Status::Rejected(e.to_string()),
    })
}
