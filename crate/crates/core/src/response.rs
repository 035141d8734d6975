//! Tabulated field dependence of the few-body quantities, with natural cubic
//! spline interpolation between grid nodes.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MaterialParams;
use crate::error::{Error, Result};
use crate::fewbody::{FewBodyConfig, FewBodySolver, SystemResponse};

/// Uniform field grid `start, start + step, …, stop` (inclusive, tesla).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for FieldGrid {
    fn default() -> Self {
        FieldGrid { start: 0.1, stop: 10.0, step: 0.1 }
    }
}

impl FieldGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0) || !(self.stop >= self.start) || !(self.step > 0.0) {
            return Err(Error::Config(format!(
                "field grid needs 0 < start <= stop and step > 0, got {:?}",
                self
            )));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

/// Natural cubic spline through `(x_k, y_k)` with strictly increasing `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the nodes; zero at both ends.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), got: y.len() });
        }
        if x.len() < 2 {
            return Err(Error::Config("a spline needs at least two nodes".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("spline nodes must be strictly increasing".into()));
        }
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(CubicSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Value at `t`; `t` must lie inside the node range.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain(format!("{t} outside the tabulated range [{lo}, {hi}]")));
        }
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        Ok(a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0)
    }
}

/// `SystemResponse` sampled on a field grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    fields: Vec<f64>,
    rows: Vec<SystemResponse>,
    splines: Option<[CubicSpline; 5]>,
}

pub const RESPONSE_HEADER: &str = "B,omega_X,omega_T,omega_e,P_X,P_T";

impl ResponseTable {
    /// A single-row table cannot be interpolated; it only answers at its node.
    pub fn new(fields: Vec<f64>, rows: Vec<SystemResponse>) -> Result<Self> {
        if fields.len() != rows.len() {
            return Err(Error::Dimension { expected: fields.len(), got: rows.len() });
        }
        if fields.is_empty() {
            return Err(Error::Config("response table needs at least one field".into()));
        }
        let splines = if fields.len() >= 2 {
            let col = |f: fn(&SystemResponse) -> f64| -> Result<CubicSpline> {
                CubicSpline::new(&fields, &rows.iter().map(f).collect::<Vec<_>>())
            };
            Some([
                col(|r| r.omega_x)?,
                col(|r| r.omega_t)?,
                col(|r| r.omega_e)?,
                col(|r| r.p_x)?,
                col(|r| r.p_t)?,
            ])
        } else {
            None
        };
        Ok(ResponseTable { fields, rows, splines })
    }

    /// Exact diagonalization at every grid point, in parallel.
    pub fn compute(grid: &FieldGrid, params: &MaterialParams, config: &FewBodyConfig) -> Result<Self> {
        let fields = grid.points()?;
        let solver = FewBodySolver::new(params.clone(), *config)?;
        let rows = fields.par_iter().map(|&b| solver.response(b)).collect::<Result<Vec<_>>>()?;
        ResponseTable::new(fields, rows)
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn rows(&self) -> &[SystemResponse] {
        &self.rows
    }

    pub fn interpolates(&self) -> bool {
        self.splines.is_some()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.fields[0], *self.fields.last().unwrap())
    }

    pub fn at(&self, b: f64) -> Result<SystemResponse> {
        match &self.splines {
            None => {
                if b == self.fields[0] {
                    Ok(self.rows[0])
                } else {
                    Err(Error::Domain(format!("single-point table at {} T queried at {b} T", self.fields[0])))
                }
            }
            Some([wx, wt, we, px, pt]) => Ok(SystemResponse {
                omega_x: wx.eval(b)?,
                omega_t: wt.eval(b)?,
                omega_e: we.eval(b)?,
                p_x: px.eval(b)?,
                p_t: pt.eval(b)?,
            }),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RESPONSE_HEADER}")?;
        for (b, r) in self.fields.iter().zip(&self.rows) {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                b, r.omega_x, r.omega_t, r.omega_e, r.p_x, r.p_t
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty response table".into()))??;
        if header.trim() != RESPONSE_HEADER {
            return Err(Error::Config(format!("unexpected response header {header:?}")));
        }
        let mut fields = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("response row {}: {e}", n + 2)))?;
            if v.len() != 6 {
                return Err(Error::Config(format!("response row {} has {} columns", n + 2, v.len())));
            }
            fields.push(v[0]);
            rows.push(SystemResponse { omega_x: v[1], omega_t: v[2], omega_e: v[3], p_x: v[4], p_t: v[5] });
        }
        ResponseTable::new(fields, rows)
    }
}
