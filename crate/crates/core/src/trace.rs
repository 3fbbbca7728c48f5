//! Per-iteration convergence metrics and their CSV form.

use std::io::Write;

use nalgebra::DVector;

use crate::penalty::BlockVector;
use crate::{Error, Result};

/// One trace row: the solver state observed at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    /// Average per-node relative distance to the exact solution; NaN when
    /// no reference was supplied.
    pub rel_err: f64,
    pub phi: f64,
    pub grad_norm: f64,
    /// Cumulative p-vectors transmitted per node.
    pub comms: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Non-fatal diagnostics (e.g. Taylor-validity warnings).
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn final_rel_err(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.rel_err)
    }

    /// First iteration at which `rel_err <= tol`, if any.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.rel_err <= tol).map(|r| r.k)
    }

    /// CSV with header `k,rel_err,phi,grad_norm,comms,wall_ms`; floats are
    /// written with 17 significant digits so replotting is lossless.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,rel_err,phi,grad_norm,comms,wall_ms")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.k, r.rel_err, r.phi, r.grad_norm, r.comms, r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// `(1/n) sum_i ||x_i - y*||_2 / ||y*||_2`.
pub fn relative_error(x: &BlockVector, y_star: &DVector<f64>) -> Result<f64> {
    let denom = y_star.norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "relative error undefined for zero reference".into(),
        ));
    }
    let sum: f64 = x.blocks.iter().map(|b| (b - y_star).norm()).sum();
    Ok(sum / (x.n() as f64 * denom))
}
