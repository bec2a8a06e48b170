//! Uniform-grid tables with cubic (4-point Lagrange) interpolation, and
//! time maps built on them.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Relative slack (in steps) allowed past either end of a table.
const EDGE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    start: f64,
    step: f64,
    dim: usize,
    rows: Vec<DVector<f64>>,
}

impl Table {
    pub fn from_rows(start: f64, step: f64, rows: Vec<DVector<f64>>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Invalid(format!("table step must be positive, got {step}")));
        }
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| Error::Invalid("empty table".into()))?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::dim("table row", dim, bad.len()));
        }
        Ok(Table { start, step, dim, rows })
    }

    /// Samples `f` on `start, start + step, …` up to the first node at or
    /// beyond `end`.
    pub fn tabulate(f: impl Fn(f64) -> DVector<f64>, start: f64, end: f64, step: f64) -> Result<Self> {
        let count = node_count(start, end, step)?;
        let rows = (0..count).map(|k| f(start + k as f64 * step)).collect();
        Table::from_rows(start, step, rows)
    }

    pub fn try_tabulate(
        f: impl Fn(f64) -> Result<DVector<f64>>,
        start: f64,
        end: f64,
        step: f64,
    ) -> Result<Self> {
        let count = node_count(start, end, step)?;
        let rows = (0..count)
            .map(|k| f(start + k as f64 * step))
            .collect::<Result<Vec<_>>>()?;
        Table::from_rows(start, step, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn end(&self) -> f64 {
        self.start + (self.rows.len() - 1) as f64 * self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn row(&self, k: usize) -> &DVector<f64> {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let s = (t - self.start) / self.step;
        let last = (self.rows.len() - 1) as f64;
        if !(s >= -EDGE_SLACK && s <= last + EDGE_SLACK) {
            return Err(Error::OutOfRange {
                t,
                start: self.start,
                end: self.end(),
            });
        }
        let n = self.rows.len();
        if n == 1 {
            return Ok(self.rows[0].clone());
        }
        let width = n.min(4);
        let base = (s.floor() as isize - 1).clamp(0, (n - width) as isize) as usize;
        let u = s - base as f64;
        let nearest = s.round();
        if (s - nearest).abs() < 1e-12 {
            let k = (nearest as usize).min(n - 1);
            return Ok(self.rows[k].clone());
        }
        let weights = lagrange_weights(u, width);
        let mut out = DVector::zeros(self.dim);
        for (j, w) in weights.iter().enumerate().take(width) {
            out.axpy(*w, &self.rows[base + j], 1.0);
        }
        Ok(out)
    }
}

fn node_count(start: f64, end: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Invalid(format!("table step must be positive, got {step}")));
    }
    if !(end >= start) {
        return Err(Error::Invalid(format!("table range [{start}, {end}] is empty")));
    }
    Ok(((end - start) / step - 1e-9).ceil().max(0.0) as usize + 1)
}

/// Lagrange basis on the integer nodes `0..width` evaluated at `u`.
fn lagrange_weights(u: f64, width: usize) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (j, wj) in w.iter_mut().enumerate().take(width) {
        let mut acc = 1.0;
        for k in 0..width {
            if k != j {
                acc *= (u - k as f64) / (j as f64 - k as f64);
            }
        }
        *wj = acc;
    }
    w
}

type TimeFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Vector-valued function of time.
#[derive(Clone)]
pub enum TimeMap {
    Constant(DVector<f64>),
    Table(Arc<Table>),
    Function { dim: usize, f: TimeFn },
}

impl fmt::Debug for TimeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeMap::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            TimeMap::Table(t) => f
                .debug_struct("Table")
                .field("start", &t.start())
                .field("end", &t.end())
                .field("dim", &t.dim())
                .finish(),
            TimeMap::Function { dim, .. } => f.debug_struct("Function").field("dim", dim).finish(),
        }
    }
}

impl TimeMap {
    pub fn function(dim: usize, f: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        TimeMap::Function { dim, f: Arc::new(f) }
    }

    pub fn table(table: Table) -> Self {
        TimeMap::Table(Arc::new(table))
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeMap::Constant(v) => v.len(),
            TimeMap::Table(t) => t.dim(),
            TimeMap::Function { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        match self {
            TimeMap::Constant(v) => Ok(v.clone()),
            TimeMap::Table(table) => table.eval(t),
            TimeMap::Function { f, .. } => Ok(f(t)),
        }
    }

    /// Central difference with step `h`, falling back to second-order
    /// one-sided stencils at table ends.
    pub fn derivative(&self, t: f64, h: f64) -> Result<DVector<f64>> {
        if let TimeMap::Table(table) = self {
            if t - h < table.start() {
                let (f0, f1, f2) = (self.eval(t)?, self.eval(t + h)?, self.eval(t + 2.0 * h)?);
                return Ok((f1 * 4.0 - f0 * 3.0 - f2) / (2.0 * h));
            }
            if t + h > table.end() {
                let (f0, f1, f2) = (self.eval(t)?, self.eval(t - h)?, self.eval(t - 2.0 * h)?);
                return Ok((f0 * 3.0 - f1 * 4.0 + f2) / (2.0 * h));
            }
        }
        Ok((self.eval(t + h)? - self.eval(t - h)?) / (2.0 * h))
    }
}

/// Tabulates any time map on a uniform grid.
pub fn tabulate(map: &TimeMap, start: f64, end: f64, step: f64) -> Result<Table> {
    Table::try_tabulate(|t| map.eval(t), start, end, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn cubic_polynomials_are_reproduced() {
        let f = |t: f64| scalar(1.0 - 2.0 * t + 0.5 * t * t - 0.25 * t * t * t);
        let table = Table::tabulate(f, 0.0, 1.0, 0.1).unwrap();
        for k in 0..97 {
            let t = 0.0137 + 0.01 * k as f64;
            assert!((table.eval(t).unwrap()[0] - f(t)[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn nodes_are_returned_exactly() {
        let table = Table::tabulate(|t| scalar(t.sin()), 0.0, 1.0, 0.25).unwrap();
        assert_eq!(table.eval(0.5).unwrap()[0], 0.5f64.sin());
        assert_eq!(table.len(), 5);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let table = Table::tabulate(scalar, 0.0, 1.0, 0.25).unwrap();
        assert!(matches!(table.eval(1.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(table.eval(-0.01), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn short_tables_fall_back_to_lower_order() {
        let table = Table::tabulate(|t| scalar(3.0 * t + 1.0), 0.0, 0.1, 0.1).unwrap();
        assert_eq!(table.len(), 2);
        assert!((table.eval(0.05).unwrap()[0] - 1.15).abs() < 1e-14);
        let single = Table::tabulate(|_| scalar(2.0), 0.0, 0.0, 0.1).unwrap();
        assert_eq!(single.eval(0.0).unwrap()[0], 2.0);
    }

    #[test]
    fn range_end_is_covered() {
        let table = Table::tabulate(scalar, 0.0, 1.05, 0.1).unwrap();
        assert!(table.end() >= 1.05);
        assert!(table.eval(1.05).is_ok());
    }

    #[test]
    fn derivative_at_edges() {
        let map = TimeMap::table(Table::tabulate(|t| scalar(t * t), 0.0, 1.0, 0.01).unwrap());
        for t in [0.0, 0.5, 1.0] {
            assert!((map.derivative(t, 1e-4).unwrap()[0] - 2.0 * t).abs() < 1e-8);
        }
    }
}
