//! CSV export and flat `key = value` reports.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::reference::ReferenceTrajectory;
use crate::sim::SimulationTrace;

/// Shortest representation that round-trips; scientific notation
/// outside `[1e-4, 1e15)`.
pub fn number(x: f64) -> String {
    let x = x + 0.0;
    if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// 17 significant digits, scientific notation.
pub fn csv_number(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

pub fn trace_header(trace: &SimulationTrace) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=trace.n).map(|i| format!("q{i}")));
    cols.extend((1..=trace.n).map(|i| format!("p{i}")));
    cols.extend((1..=trace.k).map(|i| format!("c{i}")));
    cols.extend((1..=trace.m).map(|i| format!("u{i}")));
    cols.extend(["d_active", "err_q", "err_full"].map(String::from));
    cols.join(",")
}

pub fn write_trace_csv(trace: &SimulationTrace, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{}", trace_header(trace))?;
    for i in 0..trace.len() {
        let mut row = csv_number(trace.times[i]);
        for v in trace.q[i].iter().chain(trace.p[i].iter()).chain(trace.c[i].iter()).chain(trace.u[i].iter()) {
            row.push(',');
            row.push_str(&csv_number(*v));
        }
        let _ = write!(
            row,
            ",{},{},{}",
            u8::from(trace.d_active[i]),
            csv_number(trace.err_q[i]),
            csv_number(trace.err_full[i])
        );
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Columns `t, q_star1.., p_star1.., u_star1..` on the given times.
pub fn write_reference_csv(reference: &ReferenceTrajectory, times: &[f64], out: &mut impl Write) -> Result<()> {
    let n = reference.dof();
    let m = reference.u_star.dim();
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("q_star{i}")));
    cols.extend((1..=n).map(|i| format!("p_star{i}")));
    cols.extend((1..=m).map(|i| format!("u_star{i}")));
    writeln!(out, "{}", cols.join(","))?;
    for &t in times {
        let mut row = csv_number(t);
        let (q, p, u) = (reference.q(t)?, reference.p(t)?, reference.u(t)?);
        for v in q.iter().chain(p.iter()).chain(u.iter()) {
            row.push(',');
            row.push_str(&csv_number(*v));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Value in a flat report.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Integer(i64),
    Bool(bool),
    Text(String),
    Numbers(Vec<f64>),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Number(x) if x.is_finite() => number(*x),
            Value::Number(x) => format!("\"{x}\""),
            Value::Integer(i) => i.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Value::Numbers(v) => format!("[{}]", v.iter().map(|x| number(*x)).collect::<Vec<_>>().join(", ")),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Number(x)
    }
}
impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Integer(x as i64)
    }
}
impl From<u64> for Value {
    fn from(x: u64) -> Self {
        Value::Integer(x as i64)
    }
}
impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}
impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.to_string())
    }
}
impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}
impl From<Vec<f64>> for Value {
    fn from(x: Vec<f64>) -> Self {
        Value::Numbers(x)
    }
}

/// Ordered `key = value` lines with dotted keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, Value)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.entries.push((key.into(), value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn extend(&mut self, prefix: &str, other: &Report) {
        for (k, v) in &other.entries {
            self.entries.push((format!("{prefix}.{k}"), v.clone()));
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {}", v.render());
        }
        s
    }
}
