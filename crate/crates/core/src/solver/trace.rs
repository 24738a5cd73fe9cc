use std::io::Write;

use serde::{Deserialize, Serialize};

use super::gap::BoxSet;
use crate::Vector;

pub const CSV_HEADER: &str = "k,gamma,dist_sq,lyapunov,sigma_sq,oracle_calls,uplink_bits,gap";

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub gamma: f64,
    pub dist_sq: Option<f64>,
    pub lyapunov: Option<f64>,
    pub sigma_sq: Option<f64>,
    /// Cumulative, including initialization.
    pub oracle_calls: u64,
    /// Cumulative worker-to-server bits.
    pub uplink_bits: u64,
    /// Restricted gap of the averaged iterate.
    pub gap: Option<f64>,
    pub x: Option<Vector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// First iteration whose iterate had a non-finite coordinate.
    Diverged { iteration: usize },
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub method: String,
    pub seed: u64,
    pub lyapunov_m: f64,
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
    pub final_x: Vector,
    pub averaged_x: Option<Vector>,
    pub gap_box: Option<BoxSet>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl RunTrace {
    pub(crate) fn new(method: &str, seed: u64, lyapunov_m: f64) -> Self {
        Self {
            method: method.to_string(),
            seed,
            lyapunov_m,
            rows: Vec::new(),
            status: RunStatus::Completed,
            final_x: Vector::zeros(0),
            averaged_x: None,
            gap_box: None,
        }
    }

    pub fn initial_dist_sq(&self) -> Option<f64> {
        self.rows.first().and_then(|r| r.dist_sq)
    }

    /// `dist_sq / dist_sq_0` for every row that has both.
    pub fn relative_dist(&self) -> Vec<(usize, f64)> {
        let d0 = match self.initial_dist_sq() {
            Some(d) if d > 0.0 => d,
            _ => return Vec::new(),
        };
        self.rows.iter().filter_map(|r| r.dist_sq.map(|d| (r.k, d / d0))).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{},{},{},{},{},{}",
                r.k,
                r.gamma,
                cell(r.dist_sq),
                cell(r.lyapunov),
                cell(r.sigma_sq),
                r.oracle_calls,
                r.uplink_bits,
                cell(r.gap)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}
