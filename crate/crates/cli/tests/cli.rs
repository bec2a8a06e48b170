use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_phtrack"));
    c.env_remove("PHTRACK_LOG");
    c
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn report_value(report: &str, key: &str) -> Option<String> {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(|v| v.trim_matches('"').to_string()))
}

/// Shipped config with textual replacements.
fn edited(dir: &TempDir, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(config(name)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn robust_2dof(dir: &TempDir) -> PathBuf {
    edited(dir, "fully_actuated_2dof.toml", &[("controller = \"robust_no_velocity\"", "controller = \"robust\"")])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn certify_shipped_ball_config_passes() {
    let o = run(&["certify", "--config", s(&config("ball_on_wheel.toml"))]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn certify_names_the_violated_gain_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "ball_on_wheel.toml", &[("Gamma33 = 26.8", "Gamma33 = 0.0")]);
    let o = run(&["certify", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    let out = stdout(&o);
    assert_eq!(report_value(&out, "certificate.condition").as_deref(), Some("Gamma33 positive definite"));
    assert!(stderr(&o).contains("Gamma33"));
}

#[test]
fn malformed_config_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = \"ball_on_wheel\"\n[plant\n").unwrap();
    assert_eq!(code(&run(&["certify", "--config", s(&cfg)])), 1);
    assert_eq!(code(&run(&["certify", "--config", s(&dir.path().join("missing.toml"))])), 1);
}

#[test]
fn certified_design_reports_pass_and_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let cfg = robust_2dof(&dir);
    let out = dir.path().join("cert.txt");
    let o = run(&["certify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let written = std::fs::read_to_string(&out).unwrap();
    assert_eq!(written, stdout(&o));
    assert_eq!(report_value(&written, "certificate.verdict").as_deref(), Some("pass"));
    assert!(report_value(&written, "certificate.epsilon").is_some());
}

#[test]
fn zero_horizon_gives_an_empty_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = robust_2dof(&dir);
    let trace = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&trace), "--horizon", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text, "t,q1,q2,p1,p2,c1,c2,u1,u2,d_active,err_q,err_full\n");
}

#[test]
fn uncertified_design_needs_unsafe() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", s(&config("ball_on_wheel.toml")), "--out", s(&trace)]);
    assert_eq!(code(&o), 2);
    assert!(!trace.exists());
}

#[test]
fn default_simulation_tracks_the_ball_angle() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", s(&config("ball_on_wheel.toml")), "--out", s(&trace), "--unsafe"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    let last = text.lines().last().unwrap();
    let cells: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
    let (t, q1) = (cells[0], cells[1]);
    assert!((t - 5.0).abs() < 1e-9);
    let err = (q1 - 2.5 * (4.0 * t).sin()).abs();
    assert!(err < 0.05, "terminal |q1 - a(t)| = {err}");
}

#[test]
fn trace_csv_has_the_documented_columns_and_precision() {
    let dir = TempDir::new().unwrap();
    let cfg = robust_2dof(&dir);
    let trace = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&trace), "--horizon", "1.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 12);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 1501);
    for row in &rows {
        assert_eq!(row.len(), header.len());
    }
    let mantissa = rows[10][1].split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
    let onset = rows.iter().position(|r| r[9] == "1").unwrap();
    assert_eq!(onset, 1000);
}

#[test]
fn runs_are_reproducible_and_reference_the_config_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = robust_2dof(&dir);
    let run_once = |tag: &str| {
        let trace = dir.path().join(format!("{tag}.csv"));
        let compare = dir.path().join(format!("{tag}-b.csv"));
        let o = run(&[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&trace),
            "--compare-out",
            s(&compare),
            "--horizon",
            "2",
            "--seed",
            "11",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (std::fs::read(&trace).unwrap(), std::fs::read(&compare).unwrap(), stdout(&o), trace)
    };
    let (a, a2, report_a, trace_a) = run_once("a");
    let (b, b2, report_b, _) = run_once("b");
    assert_eq!(a, b);
    assert_eq!(a2, b2);
    let strip = |r: &str| r.lines().filter(|l| !l.starts_with("manifest.output")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&report_a), strip(&report_b));

    let hash = hex::encode(Sha256::digest(std::fs::read(&cfg).unwrap()));
    assert_eq!(report_value(&report_a, "manifest.config_hash").as_deref(), Some(hash.as_str()));
    assert_eq!(report_value(&report_a, "manifest.seed").as_deref(), Some("11"));
    let sidecar = std::fs::read_to_string(format!("{}.manifest", trace_a.display())).unwrap();
    assert_eq!(report_value(&sidecar, "manifest.config_hash").as_deref(), Some(hash.as_str()));
    let rate: f64 = report_value(&report_a, "compare.rate").unwrap().parse().unwrap();
    assert!(rate < 0.0);
}

#[test]
fn reference_export_is_feasible() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ref.csv");
    let o = run(&["reference", "--config", s(&config("ball_on_wheel.toml")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let residual: f64 = report_value(&stdout(&o), "reference.feasibility").unwrap().parse().unwrap();
    assert!(residual < 1e-6);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,q_star1,q_star2,p_star1,p_star2,u_star1");
    assert_eq!(text.lines().count(), 5002);
}

#[test]
fn equilibrium_reference_has_zero_residual() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "fully_actuated_2dof.toml", &[("amplitude = [0.5, 0.3]", "amplitude = [0.0, 0.0]")]);
    let out = dir.path().join("ref.csv");
    let o = run(&["reference", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report_value(&stdout(&o), "reference.feasibility").as_deref(), Some("0"));
}

#[test]
fn match_check_accepts_the_shipped_potential() {
    let o = run(&["match-check", "--config", s(&config("ball_on_wheel.toml"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: f64 = report_value(&stdout(&o), "residual.matching.potential").unwrap().parse().unwrap();
    assert!(m < 1e-10);
}

#[test]
fn match_check_rejects_a_perturbed_lambda() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "ball_on_wheel.toml", &[("Gamma33 = 26.8", "Gamma33 = 26.8\nlambda1 = 0.07")]);
    let o = run(&["match-check", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert_eq!(report_value(&stdout(&o), "residual.passed").as_deref(), Some("false"));
    assert!(stderr(&o).contains("matching.potential"));
}

#[test]
fn indefinite_desired_inertia_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "ball_on_wheel.toml", &[("a2 = -4.8e-3", "a2 = 0.1")]);
    let o = run(&["match-check", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("M_d not positive definite"));
}
